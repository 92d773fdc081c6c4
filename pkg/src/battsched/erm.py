"""Energy-reservoir (power-energy) battery model.

The only state is the stored energy SoE in MWh; controls are grid-side
charge and discharge powers in MW. One step:

    soe' = soe + tau_h * (eta_ch * ch - dis / eta_dis)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    FEAS_RTOL,
    InfeasibleStepError,
    LimitViolationError,
    PowerSchedule,
    StepRecord,
    TimeGrid,
    Trace,
    ValidationError,
    run_controls,
)


@dataclass(frozen=True)
class ErmParams:
    eta_ch: float
    eta_dis: float
    e_max: float  # MWh
    p_ch_max: float  # MW
    p_dis_max: float  # MW
    # (SoE fraction, available charge-power fraction) breakpoints
    limit_curve: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        for name in ("eta_ch", "eta_dis"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise ValidationError(f"{name} must lie in (0, 1], got {eta}")
        if not self.e_max > 0:
            raise ValidationError("e_max must be positive")
        if self.p_ch_max < 0 or self.p_dis_max < 0:
            raise ValidationError("rated powers must be nonnegative")
        if self.limit_curve is not None:
            curve = tuple((float(x), float(y)) for x, y in self.limit_curve)
            xs = [x for x, _ in curve]
            ys = [y for _, y in curve]
            if len(curve) < 2 or xs[0] != 0.0 or xs[-1] != 1.0:
                raise ValidationError("limit_curve must span SoE fractions 0 to 1")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValidationError("limit_curve breakpoints must be strictly increasing")
            if any(not 0.0 <= y <= 1.0 for y in ys):
                raise ValidationError("limit_curve values must lie in [0, 1]")
            if ys[-1] != 0.0:
                raise ValidationError("limit_curve must be 0 at a full reservoir")
            object.__setattr__(self, "limit_curve", curve)


@dataclass(frozen=True)
class ErmState:
    soe: float  # MWh


def _limit_fraction(soe_fraction, curve) -> np.ndarray | float:
    xs = [x for x, _ in curve]
    ys = [y for _, y in curve]
    return np.interp(soe_fraction, xs, ys)


def erm_available_charge_power(state: ErmState, params: ErmParams) -> float:
    if params.limit_curve is None:
        return params.p_ch_max
    frac = min(max(state.soe / params.e_max, 0.0), 1.0)
    return params.p_ch_max * float(_limit_fraction(frac, params.limit_curve))


def erm_step(state: ErmState, ch: float, dis: float, params: ErmParams, tau: float) -> ErmState:
    """Advance the reservoir by one interval of ``tau`` seconds."""
    if ch < 0 or dis < 0:
        raise ValidationError("ch and dis must be nonnegative")
    p_avail = erm_available_charge_power(state, params)
    if ch > p_avail + FEAS_RTOL * max(params.p_ch_max, 1.0):
        raise LimitViolationError("p_ch_max", ch - p_avail,
                                  f"charge power {ch:.6g} MW above available {p_avail:.6g} MW")
    if dis > params.p_dis_max * (1 + FEAS_RTOL) + FEAS_RTOL:
        raise LimitViolationError("p_dis_max", dis - params.p_dis_max,
                                  f"discharge power {dis:.6g} MW above rated {params.p_dis_max:.6g} MW")
    tau_h = tau / 3600.0
    soe = state.soe + tau_h * (params.eta_ch * ch - dis / params.eta_dis)
    tol = FEAS_RTOL * params.e_max
    if soe < -tol:
        raise InfeasibleStepError("soe_min", -soe, f"state-of-energy {soe:.6g} MWh below 0")
    if soe > params.e_max + tol:
        raise InfeasibleStepError("soe_max", soe - params.e_max,
                                  f"state-of-energy {soe:.6g} MWh above e_max {params.e_max:.6g} MWh")
    return ErmState(min(max(soe, 0.0), params.e_max))


def erm_transition(soe: np.ndarray, ch: float, dis: float, params: ErmParams, tau: float):
    """Vectorised ``erm_step`` over an array of SoE values.

    Returns ``(next_soe, feasible)``; infeasible entries are left unclipped.
    """
    soe = np.asarray(soe, dtype=float)
    feasible = np.ones(soe.shape, dtype=bool)
    if params.limit_curve is not None:
        frac = np.clip(soe / params.e_max, 0.0, 1.0)
        p_avail = params.p_ch_max * _limit_fraction(frac, params.limit_curve)
    else:
        p_avail = np.full(soe.shape, params.p_ch_max)
    feasible &= ch <= p_avail + FEAS_RTOL * max(params.p_ch_max, 1.0)
    feasible &= dis <= params.p_dis_max * (1 + FEAS_RTOL) + FEAS_RTOL
    nxt = soe + (tau / 3600.0) * (params.eta_ch * ch - dis / params.eta_dis)
    tol = FEAS_RTOL * params.e_max
    feasible &= (nxt >= -tol) & (nxt <= params.e_max + tol)
    return np.where(feasible, np.clip(nxt, 0.0, params.e_max), nxt), feasible


def _as_pair(u) -> tuple[float, float]:
    if isinstance(u, (tuple, list, np.ndarray)):
        ch, dis = u
        return float(ch), float(dis)
    u = float(u)
    return max(-u, 0.0), max(u, 0.0)


class ErmModel:
    """Energy-reservoir simulator with a fixed initial state.

    Controls are ``(ch, dis)`` pairs in MW, or a signed net power
    (positive = discharge) which maps to a pair with one side zero.
    """

    name = "erm"
    schedule_type = PowerSchedule

    def __init__(self, params: ErmParams, init: ErmState):
        if not 0.0 <= init.soe <= params.e_max:
            raise ValidationError("initial soe outside [0, e_max]")
        self.params = params
        self.init = init

    def initial_record(self) -> StepRecord:
        return StepRecord(state=self.init, soc_fraction=self.init.soe / self.params.e_max)

    def step(self, state: ErmState, u, tau: float) -> StepRecord:
        ch, dis = _as_pair(u)
        nxt = erm_step(state, ch, dis, self.params, tau)
        return StepRecord(
            state=nxt,
            soc_fraction=nxt.soe / self.params.e_max,
            ch=ch,
            dis=dis,
            pack_power_mw=dis - ch,
            throughput_mwh=(ch + dis) * tau / 3600.0,
        )

    def controls_of(self, schedule: PowerSchedule) -> list[tuple[float, float]]:
        if not isinstance(schedule, PowerSchedule):
            raise ValidationError("the energy-reservoir model runs power schedules")
        return schedule.controls

    def schedule_from_controls(self, grid: TimeGrid, controls: Sequence) -> PowerSchedule:
        pairs = [_as_pair(u) for u in controls]
        return PowerSchedule(grid, [p[0] for p in pairs], [p[1] for p in pairs])

    def simulate(self, schedule: PowerSchedule) -> Trace:
        return run_controls(self, schedule.grid, self.controls_of(schedule))


def erm_simulate(schedule: PowerSchedule, init: ErmState, params: ErmParams) -> Trace:
    return ErmModel(params, init).simulate(schedule)
