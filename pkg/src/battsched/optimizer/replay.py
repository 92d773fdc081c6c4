"""Execute a schedule under a (possibly different) model and audit it.

A power schedule replayed on a current-driven model is converted step by
step: the cell current is the root of N * I * V(I) = P, found by bisection
on the model's unchecked step (pack power is increasing in current over
the rated range). When the step is infeasible, the violation is recorded
and the control is scaled towards zero, again by bisection, until the
step is feasible; the simulation continues from there. This mimics a
battery management system that clips unsafe commands.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core import (
    CurrentSchedule,
    InfeasibleStepError,
    PowerSchedule,
    Trace,
    ValidationError,
)
from .objectives import check_compatible
from .report import SolveReport

BISECT_ITERS = 60


@dataclass(frozen=True)
class Violation:
    kind: str
    step: int
    magnitude: float
    message: str = ""

    def as_dict(self) -> dict:
        return {"kind": self.kind, "step": self.step, "magnitude": self.magnitude, "message": self.message}


@dataclass(frozen=True, eq=False)
class ReplayReport:
    model: str
    trace: Trace
    violations: tuple[Violation, ...]
    realized_value: float
    claimed_value: float
    applied: tuple = field(default=())  # control actually executed at each step

    @property
    def gap(self) -> float:
        """Claimed minus realized value (nan when nothing was claimed)."""
        return self.claimed_value - self.realized_value

    @property
    def clean(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        kinds: dict[str, int] = {}
        for v in self.violations:
            kinds[v.kind] = kinds.get(v.kind, 0) + 1
        return {
            "model": self.model,
            "claimed_value_usd": self.claimed_value,
            "realized_value_usd": self.realized_value,
            "gap_usd": self.gap,
            "n_violations": len(self.violations),
            "violation_counts": kinds,
            "violations": [v.as_dict() for v in self.violations],
        }


def _scale(u, s: float):
    if isinstance(u, tuple):
        return (u[0] * s, u[1] * s)
    return u * s


def _try(model, state, u, tau):
    try:
        return model.step(state, u, tau), None
    except InfeasibleStepError as exc:
        return None, exc


def _clip_towards_zero(model, state, u, tau):
    """Largest fraction of ``u`` that steps feasibly (bisection on the scale)."""
    rec, _ = _try(model, state, _scale(u, 0.0), tau)
    if rec is None:
        return None, _scale(u, 0.0)
    lo, hi, best = 0.0, 1.0, (rec, _scale(u, 0.0))
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        rec, _ = _try(model, state, _scale(u, mid), tau)
        if rec is None:
            hi = mid
        else:
            lo, best = mid, (rec, _scale(u, mid))
    return best


def power_to_current(model, state, pack_mw: float, tau: float) -> tuple[float, float]:
    """Cell current whose pack power matches ``pack_mw`` from ``state``.

    Returns ``(current, shortfall_mw)``; the shortfall is nonzero when the
    target lies outside what the rated current range can deliver, in which
    case the current sits on the nearer bound.
    """
    target = pack_mw * 1e6 / model.n_cells  # W per cell

    def power(i):
        return i * model.soft_step(state, i, tau).voltage

    lo, hi = model.current_bounds()
    if target == 0.0:
        return 0.0, 0.0
    p_lo, p_hi = power(lo), power(hi)
    if target >= p_hi:
        return hi, (target - p_hi) * model.n_cells / 1e6
    if target <= p_lo:
        return lo, (p_lo - target) * model.n_cells / 1e6
    a, b = (0.0, hi) if target > 0 else (lo, 0.0)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (a + b)
        if power(mid) < target:
            a = mid
        else:
            b = mid
        if b - a <= 1e-13 * max(1.0, abs(b)):
            break
    return 0.5 * (a + b), 0.0


def replay(schedule, model, objective, claimed: float | SolveReport | None = None) -> ReplayReport:
    """Run ``schedule`` on ``model`` with clipping, scoring with ``objective``."""
    check_compatible(model, objective)
    grid = schedule.grid
    if grid.steps != objective.grid.steps:
        raise ValidationError("schedule and objective horizons differ")
    if isinstance(claimed, SolveReport):
        claimed = claimed.value
    claimed = float("nan") if claimed is None else float(claimed)

    if isinstance(schedule, model.schedule_type):
        targets = list(model.controls_of(schedule))
        convert = False
    elif isinstance(schedule, PowerSchedule) and model.schedule_type is CurrentSchedule:
        targets = schedule.net.tolist()
        convert = True
    else:
        raise ValidationError(
            f"cannot replay a {type(schedule).__name__} on the {model.name} model")

    first = model.initial_record()
    records = [first]
    state = first.state
    throughput = 0.0
    violations: list[Violation] = []
    applied = []
    for k, target in enumerate(targets):
        u = target
        if convert:
            u, short = power_to_current(model, state, target, grid.tau)
            if short > 0:
                violations.append(Violation("power", k, short,
                                            f"pack power {target:.6g} MW not deliverable; short {short:.6g} MW"))
        rec, exc = _try(model, state, u, grid.tau)
        if exc is not None:
            violations.append(Violation(exc.kind, k, exc.magnitude, exc.detail))
            rec, u = _clip_towards_zero(model, state, u, grid.tau)
            if rec is None:
                # even rest is infeasible here; carry on unchecked
                rec = model.soft_step(state, 0.0, grid.tau) if hasattr(model, "soft_step") \
                    else model.step(state, 0.0, grid.tau)
                violations.append(Violation("rest_infeasible", k, 0.0, "no feasible control at this step"))
        throughput += rec.throughput_mwh
        records.append(replace(rec, throughput_mwh=throughput))
        state = rec.state
        applied.append(u)
    trace = Trace(grid, tuple(records), model.name)
    realized = objective.value(trace)
    return ReplayReport(model.name, trace, tuple(violations), realized, claimed, tuple(applied))


def applied_schedule(report: ReplayReport, model):
    """The clipped schedule that was actually executed, in the model's own controls."""
    return model.schedule_from_controls(report.trace.grid, list(report.applied))


def realized_power(report: ReplayReport) -> np.ndarray:
    return np.asarray(report.trace.pack_power_mw[1:])
