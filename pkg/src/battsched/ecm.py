"""Equivalent-circuit (voltage-current) battery model.

One cell: an SoC-dependent open-circuit voltage source, a series
resistance ``r0`` and one parallel RC branch (``rd``, ``cd``) for
diffusion. The pack is ``n_cells`` identical cells.

Per step with current I (A, positive on discharge):

    soc'  = soc - eta_c * I * tau_h                          (Ah)
    v_d'  = RC/(tau + RC) * v_d + tau*rd/(tau + RC) * I      (tau in s)
    V     = OCV(soc'/q_max) - I*r0 - v_d'
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    FEAS_RTOL,
    CurrentSchedule,
    InfeasibleStepError,
    LimitViolationError,
    StepRecord,
    TimeGrid,
    Trace,
    ValidationError,
    run_controls,
)


@dataclass(frozen=True)
class OcvCurve:
    soc: tuple[float, ...]  # fractions, strictly increasing from 0 to 1
    volts: tuple[float, ...]

    def __post_init__(self):
        soc = tuple(float(x) for x in self.soc)
        volts = tuple(float(v) for v in self.volts)
        if len(soc) != len(volts) or len(soc) < 2:
            raise ValidationError("OCV curve needs at least two (soc, volts) pairs")
        if soc[0] != 0.0 or soc[-1] != 1.0:
            raise ValidationError("OCV curve must cover SoC fractions 0 and 1")
        if any(b <= a for a, b in zip(soc, soc[1:])):
            raise ValidationError("OCV SoC breakpoints must be strictly increasing")
        if any(b < a for a, b in zip(volts, volts[1:])):
            raise ValidationError("OCV must be nondecreasing in SoC")
        object.__setattr__(self, "soc", soc)
        object.__setattr__(self, "volts", volts)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "OcvCurve":
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def pairs(self) -> list[list[float]]:
        return [[s, v] for s, v in zip(self.soc, self.volts)]


# Synthetic NMC/graphite-like open-circuit voltage, 21 breakpoints at 5 %
# spacing, matching the rest voltage of the default single-particle cell.
# Not fitted to any commercial cell.
DEFAULT_OCV = OcvCurve(
    tuple(k / 20 for k in range(21)),
    (2.9209, 3.1171, 3.2340, 3.3167, 3.3830, 3.4401, 3.4913, 3.5384, 3.5823,
     3.6240, 3.6638, 3.7024, 3.7399, 3.7766, 3.8128, 3.8486, 3.8842, 3.9195,
     3.9547, 3.9898, 4.0249),
)


def ocv_eval(curve: OcvCurve, soc_fraction):
    """Piecewise-linear OCV lookup; exact at the breakpoints."""
    arr = np.asarray(soc_fraction, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValidationError(f"SoC fraction outside [0, 1]: {soc_fraction!r}")
    out = np.interp(arr, curve.soc, curve.volts)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EcmParams:
    r0: float  # ohm
    rd: float  # ohm
    cd: float  # F
    eta_c: float
    q_max: float  # Ah
    v_min: float
    v_max: float
    i_max_ch: float  # A, magnitude
    i_max_dis: float  # A
    n_cells: int
    ocv: OcvCurve = DEFAULT_OCV
    # exp(-tau/RC) hold instead of the backward-difference recursion
    exact_hold: bool = False

    def __post_init__(self):
        if self.r0 < 0 or self.rd < 0:
            raise ValidationError("resistances must be nonnegative")
        if not self.cd > 0:
            raise ValidationError("cd must be positive")
        if not 0.0 < self.eta_c <= 1.0:
            raise ValidationError("eta_c must lie in (0, 1]")
        if not self.q_max > 0:
            raise ValidationError("q_max must be positive")
        if not self.v_min < self.v_max:
            raise ValidationError("v_min must be below v_max")
        if self.i_max_ch < 0 or self.i_max_dis < 0:
            raise ValidationError("current bounds must be nonnegative")
        if isinstance(self.n_cells, bool) or int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValidationError("n_cells must be a positive integer")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def time_constant(self) -> float:
        return self.rd * self.cd

    def rc_weights(self, tau: float) -> tuple[float, float]:
        """(decay, gain) so that v_d' = decay * v_d + gain * I."""
        rc = self.time_constant
        if self.exact_hold:
            decay = math.exp(-tau / rc) if rc > 0 else 0.0
            return decay, (1.0 - decay) * self.rd
        return rc / (tau + rc), tau * self.rd / (tau + rc)


@dataclass(frozen=True)
class EcmState:
    soc: float  # Ah
    v_d: float = 0.0  # V


def ecm_transition(soc, v_d, current: float, params: EcmParams, tau: float):
    """Vectorised step without raising.

    Returns ``(soc', v_d', V, feasible)``. Voltage is computed from the
    clipped SoC fraction when the capacity bound is broken.
    """
    soc = np.asarray(soc, dtype=float)
    v_d = np.asarray(v_d, dtype=float)
    decay, gain = params.rc_weights(tau)
    soc_next = soc - params.eta_c * current * tau / 3600.0
    vd_next = decay * v_d + gain * current
    frac = np.clip(soc_next / params.q_max, 0.0, 1.0)
    volts = np.interp(frac, params.ocv.soc, params.ocv.volts) - current * params.r0 - vd_next
    qtol = FEAS_RTOL * params.q_max
    vtol = FEAS_RTOL * params.v_max
    ok = (-params.i_max_ch * (1 + FEAS_RTOL) <= current <= params.i_max_dis * (1 + FEAS_RTOL))
    feasible = (
        ok
        & (soc_next >= -qtol) & (soc_next <= params.q_max + qtol)
        & (volts >= params.v_min - vtol) & (volts <= params.v_max + vtol)
    )
    soc_next = np.where(feasible, np.clip(soc_next, 0.0, params.q_max), soc_next)
    return soc_next, vd_next, volts, feasible


def check_current(current: float, i_max_ch: float, i_max_dis: float) -> None:
    if current > i_max_dis * (1 + FEAS_RTOL):
        raise LimitViolationError("i_max_dis", current - i_max_dis,
                                  f"discharge current {current:.6g} A above {i_max_dis:.6g} A")
    if current < -i_max_ch * (1 + FEAS_RTOL):
        raise LimitViolationError("i_max_ch", -current - i_max_ch,
                                  f"charge current {-current:.6g} A above {i_max_ch:.6g} A")


def check_voltage(volts: float, v_min: float, v_max: float) -> None:
    tol = FEAS_RTOL * v_max
    if volts < v_min - tol:
        raise InfeasibleStepError("v_min", v_min - volts,
                                  f"terminal voltage {volts:.6g} V below v_min {v_min:.6g} V")
    if volts > v_max + tol:
        raise InfeasibleStepError("v_max", volts - v_max,
                                  f"terminal voltage {volts:.6g} V above v_max {v_max:.6g} V")


def ecm_step(state: EcmState, current: float, params: EcmParams, tau: float) -> tuple[EcmState, float]:
    """One step of the circuit model; returns the new state and terminal voltage.

    Raises on the current bound, then capacity, then voltage.
    """
    check_current(current, params.i_max_ch, params.i_max_dis)
    soc = state.soc - params.eta_c * current * tau / 3600.0
    tol = FEAS_RTOL * params.q_max
    if soc < -tol:
        raise InfeasibleStepError("soc_min", -soc, f"state-of-charge {soc:.6g} Ah below 0")
    if soc > params.q_max + tol:
        raise InfeasibleStepError("soc_max", soc - params.q_max,
                                  f"state-of-charge {soc:.6g} Ah above q_max {params.q_max:.6g} Ah")
    soc = min(max(soc, 0.0), params.q_max)
    decay, gain = params.rc_weights(tau)
    v_d = decay * state.v_d + gain * current
    volts = ocv_eval(params.ocv, soc / params.q_max) - current * params.r0 - v_d
    check_voltage(volts, params.v_min, params.v_max)
    return EcmState(soc, v_d), volts


def ecm_rest_voltage(state: EcmState, params: EcmParams) -> float:
    return ocv_eval(params.ocv, min(max(state.soc / params.q_max, 0.0), 1.0)) - state.v_d


class EcmModel:
    """Equivalent-circuit simulator; controls are cell currents in A."""

    name = "ecm"
    schedule_type = CurrentSchedule

    def __init__(self, params: EcmParams, init: EcmState):
        if not 0.0 <= init.soc <= params.q_max:
            raise ValidationError("initial soc outside [0, q_max]")
        self.params = params
        self.init = init

    @property
    def n_cells(self) -> int:
        return self.params.n_cells

    def initial_record(self) -> StepRecord:
        return StepRecord(
            state=self.init,
            soc_fraction=self.init.soc / self.params.q_max,
            voltage=ecm_rest_voltage(self.init, self.params),
            current=0.0,
            cell_power_w=0.0,
        )

    def _record(self, state: EcmState, current: float, volts: float, tau: float) -> StepRecord:
        cell_w = current * volts
        pack_mw = self.params.n_cells * cell_w / 1e6
        return StepRecord(
            state=state,
            soc_fraction=state.soc / self.params.q_max,
            voltage=volts,
            current=current,
            cell_power_w=cell_w,
            pack_power_mw=pack_mw,
            throughput_mwh=abs(pack_mw) * tau / 3600.0,
        )

    def step(self, state: EcmState, u: float, tau: float) -> StepRecord:
        current = float(u)
        nxt, volts = ecm_step(state, current, self.params, tau)
        return self._record(nxt, current, volts, tau)

    def soft_step(self, state: EcmState, current: float, tau: float) -> StepRecord:
        """Step without bound checks (SoC clipped into range for the OCV lookup)."""
        soc, v_d, volts, _ = ecm_transition(state.soc, state.v_d, current, self.params, tau)
        soc = min(max(float(soc), 0.0), self.params.q_max)
        return self._record(EcmState(soc, float(v_d)), current, float(volts), tau)

    def current_bounds(self) -> tuple[float, float]:
        return -self.params.i_max_ch, self.params.i_max_dis

    def controls_of(self, schedule: CurrentSchedule) -> list[float]:
        if not isinstance(schedule, CurrentSchedule):
            raise ValidationError("the circuit model runs current schedules")
        return schedule.controls

    def schedule_from_controls(self, grid: TimeGrid, controls: Sequence[float]) -> CurrentSchedule:
        return CurrentSchedule(grid, [float(u) for u in controls])

    def simulate(self, schedule: CurrentSchedule) -> Trace:
        return run_controls(self, schedule.grid, self.controls_of(schedule))


def ecm_simulate(schedule: CurrentSchedule, init: EcmState, params: EcmParams) -> Trace:
    return EcmModel(params, init).simulate(schedule)
