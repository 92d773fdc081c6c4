"""Economic objectives: energy arbitrage and peak shaving.

Both are maximised. Revenue uses the pack power at the grid boundary
(MW, positive when delivering) and the interval length in hours. A
degradation cost ``weight * replacement_cost * loss / eol_fraction`` is
subtracted, with the loss taken from one of the degradation models:

* ``"none"``       no degradation cost;
* ``"throughput"`` linear in cycled energy (additive over steps);
* ``"rainflow"``   stress-weighted rainflow cycles of the SoC profile;
* ``"sei"``        lithium lost to SEI growth (particle model with
                   degradation enabled).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import BatteryError, InfeasibleStepError, PriceSeries, Trace, ValidationError
from ..degradation import (
    EOL_FRACTION,
    StressFunction,
    ThroughputModel,
    cycle_fade,
    rainflow_cycles,
)

DEGRADATION_MODES = ("none", "throughput", "rainflow", "sei")


class EvaluationError(BatteryError):
    """A schedule could not be evaluated because it is infeasible."""

    def __init__(self, violation: InfeasibleStepError):
        self.violation = violation
        super().__init__(f"schedule infeasible: {violation}")


@dataclass(frozen=True)
class Degradation:
    """How capacity loss is measured and priced."""

    mode: str = "none"
    weight: float = 0.0  # lambda
    replacement_cost: float = 0.0  # $
    throughput: ThroughputModel | None = None
    stress: StressFunction = StressFunction()
    eol_fraction: float = EOL_FRACTION

    def __post_init__(self):
        if self.mode not in DEGRADATION_MODES:
            raise ValidationError(f"unknown degradation mode {self.mode!r}")
        if self.weight < 0:
            raise ValidationError("degradation weight must be nonnegative")
        if self.replacement_cost < 0:
            raise ValidationError("replacement cost must be nonnegative")
        if self.mode == "throughput" and self.throughput is None:
            raise ValidationError("throughput degradation needs a ThroughputModel")

    @property
    def dollars_per_loss(self) -> float:
        return self.weight * self.replacement_cost / self.eol_fraction

    @property
    def dollars_per_mwh(self) -> float:
        """Marginal cost of cycled energy under the throughput model."""
        if self.mode != "throughput":
            return 0.0
        return self.dollars_per_loss * self.throughput.loss_rate()

    def loss(self, trace: Trace) -> float:
        """Capacity-loss fraction of a trace under this mode (unclamped)."""
        if self.mode == "throughput":
            return self.throughput.loss_rate() * float(trace.throughput_mwh[-1])
        if self.mode == "rainflow":
            return cycle_fade(rainflow_cycles(trace.soc_fraction), self.stress)
        if self.mode == "sei":
            return float(trace.capacity_loss[-1] - trace.capacity_loss[0])
        return 0.0

    def cost(self, trace: Trace) -> float:
        if self.dollars_per_loss == 0.0:
            return 0.0
        return self.dollars_per_loss * self.loss(trace)


NO_DEGRADATION = Degradation()


class _Objective:
    prices: PriceSeries
    degradation: Degradation

    @property
    def grid(self):
        return self.prices.grid

    @property
    def additive(self) -> bool:
        """True when the value is a sum of per-step rewards."""
        return self.degradation.mode in ("none", "throughput") and not self.has_peak_term

    has_peak_term = False

    def _energy_reward(self, t: int, pack_mw: float, step_mwh: float) -> float:
        tau_h = self.grid.tau_hours
        return (self.prices.prices[t] * pack_mw * tau_h
                - self.degradation.dollars_per_mwh * step_mwh)


@dataclass(frozen=True, eq=False)
class ArbitrageObjective(_Objective):
    prices: PriceSeries
    degradation: Degradation = NO_DEGRADATION

    name = "arbitrage"

    def stage_reward(self, t: int, pack_mw: float, step_mwh: float) -> float:
        """Reward of step ``t`` when additive (throughput cost included)."""
        return self._energy_reward(t, pack_mw, step_mwh)

    def revenue(self, trace: Trace) -> float:
        p = trace.pack_power_mw[1:]
        return float(np.dot(self.prices.prices, p)) * self.grid.tau_hours

    def value(self, trace: Trace) -> float:
        return self.revenue(trace) - self.degradation.cost(trace)

    def breakdown(self, trace: Trace) -> dict:
        rev = self.revenue(trace)
        deg = self.degradation.cost(trace)
        return {"revenue_usd": rev, "degradation_cost_usd": deg,
                "capacity_loss": self.degradation.loss(trace), "value_usd": rev - deg}


@dataclass(frozen=True, eq=False)
class PeakShavingObjective(_Objective):
    """Bill savings against the no-battery bill.

    bill(net) = sum(price * net * tau_h) + demand_charge * max(net), with
    net = load - pack power. The value is bill(load) - bill(net) minus the
    degradation cost, so an idle battery scores 0.
    """

    prices: PriceSeries
    load: np.ndarray
    demand_charge: float
    degradation: Degradation = NO_DEGRADATION

    name = "peakshaving"
    has_peak_term = True

    def __post_init__(self):
        load = np.array(self.load, dtype=float)
        if load.ndim != 1 or len(load) != self.grid.steps:
            raise ValidationError("load length must match the price grid")
        if not np.all(np.isfinite(load)):
            raise ValidationError("load must be finite")
        if self.demand_charge < 0:
            raise ValidationError("demand charge must be nonnegative")
        load.setflags(write=False)
        object.__setattr__(self, "load", load)

    def bill(self, net: np.ndarray) -> float:
        net = np.asarray(net, dtype=float)
        energy = float(np.dot(self.prices.prices, net)) * self.grid.tau_hours
        return energy + self.demand_charge * float(net.max())

    def stage_reward(self, t: int, pack_mw: float, step_mwh: float) -> float:
        """Energy part of the savings; the demand charge is handled by the solver."""
        return self._energy_reward(t, pack_mw, step_mwh)

    def net_load(self, trace: Trace) -> np.ndarray:
        return self.load - trace.pack_power_mw[1:]

    def value(self, trace: Trace) -> float:
        saving = self.bill(self.load) - self.bill(self.net_load(trace))
        return saving - self.degradation.cost(trace)

    def breakdown(self, trace: Trace) -> dict:
        net = self.net_load(trace)
        deg = self.degradation.cost(trace)
        return {"baseline_bill_usd": self.bill(self.load), "bill_usd": self.bill(net),
                "peak_net_load_mw": float(net.max()), "degradation_cost_usd": deg,
                "capacity_loss": self.degradation.loss(trace),
                "value_usd": self.bill(self.load) - self.bill(net) - deg}


def check_compatible(model, objective) -> None:
    if objective.degradation.mode == "sei" and (model.name != "spm" or not getattr(model, "degrade", False)):
        raise ValidationError("sei degradation requires the particle model with degradation enabled")
    if len(objective.prices.prices) != objective.grid.steps:
        raise ValidationError("objective prices do not match its grid")


def evaluate(model, schedule, objective) -> float:
    """Objective value of ``schedule`` simulated under ``model``.

    Raises :class:`EvaluationError` carrying the violation when the
    schedule is infeasible.
    """
    check_compatible(model, objective)
    if schedule.grid.steps != objective.grid.steps:
        raise ValidationError("schedule and objective horizons differ")
    try:
        trace = model.simulate(schedule)
    except InfeasibleStepError as exc:
        raise EvaluationError(exc) from exc
    return objective.value(trace)
