"""Shared time, price, schedule and trace types.

Units inside the package are SI (A, V, W, s, mol, m) except at the grid
boundary, where power is MW and energy MWh as is customary for market
studies. Current is positive on discharge everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Any, Iterable, Sequence

import numpy as np

SECONDS_PER_HOUR = 3600.0
W_PER_MW = 1e6

# Bound checks accept overshoot up to this fraction of the bound's scale
# (floating-point slack), and snap the state back onto the bound.
FEAS_RTOL = 1e-9


class BatteryError(Exception):
    """Base class for all package errors."""


class ValidationError(BatteryError, ValueError):
    """Bad input or parameters."""


class ConfigurationError(ValidationError):
    """A numerical scheme cannot run with the requested settings."""


class StepSizeError(BatteryError):
    """The time step produced an unphysical state (e.g. negative concentration)."""


class NumericalError(BatteryError):
    """An inner iteration failed to converge."""


class SaturationError(BatteryError):
    """An electrode surface is fully lithiated or delithiated."""


class InfeasibleStepError(BatteryError):
    """A step left the operating envelope.

    ``kind`` names the violated bound (e.g. ``"soe_max"``, ``"v_min"``),
    ``magnitude`` is how far past the bound the step went, in the bound's
    own units. ``step`` is filled in by the simulators.
    """

    def __init__(self, kind: str, magnitude: float, message: str = "", step: int | None = None):
        self.kind = kind
        self.magnitude = float(magnitude)
        self.step = step
        self.detail = message or f"{kind} violated by {magnitude:.6g}"
        super().__init__(self._text())

    def _text(self) -> str:
        if self.step is None:
            return self.detail
        return f"step {self.step}: {self.detail}"

    def at_step(self, step: int) -> "InfeasibleStepError":
        self.step = step
        self.args = (self._text(),)
        return self


class LimitViolationError(InfeasibleStepError):
    """A control exceeded its rated limit (power or current)."""


def _frozen_array(values: Any, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    t0: datetime
    tau: float  # seconds
    steps: int

    def __post_init__(self):
        if isinstance(self.tau, bool) or not isinstance(self.tau, (int, float)) \
                or not math.isfinite(self.tau) or self.tau <= 0:
            raise ValidationError(f"tau must be a positive number of seconds, got {self.tau!r}")
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def tau_hours(self) -> float:
        return self.tau / SECONDS_PER_HOUR

    @property
    def times(self) -> list[datetime]:
        """Start time of each interval."""
        return [self.t0 + timedelta(seconds=k * self.tau) for k in range(self.steps)]


def build_time_grid(t0: datetime, tau: float, steps: int) -> TimeGrid:
    return TimeGrid(t0, tau, steps)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Per-interval energy price in $/MWh (negative prices allowed)."""

    grid: TimeGrid
    prices: np.ndarray

    def __post_init__(self):
        prices = _frozen_array(self.prices, "prices")
        if len(prices) != self.grid.steps:
            raise ValidationError(f"{len(prices)} prices for a grid of {self.grid.steps} steps")
        if not np.all(np.isfinite(prices)):
            raise ValidationError("prices must be finite")
        object.__setattr__(self, "prices", prices)


@dataclass(frozen=True, eq=False)
class PowerSchedule:
    """Grid-side charge/discharge powers in MW for the energy-reservoir model."""

    grid: TimeGrid
    ch: np.ndarray
    dis: np.ndarray

    def __post_init__(self):
        ch = _frozen_array(self.ch, "ch")
        dis = _frozen_array(self.dis, "dis")
        if len(ch) != self.grid.steps or len(dis) != self.grid.steps:
            raise ValidationError("schedule length does not match the grid")
        if not np.all(np.isfinite(ch + dis)) or np.any(ch < 0) or np.any(dis < 0):
            raise ValidationError("ch and dis must be finite and nonnegative")
        object.__setattr__(self, "ch", ch)
        object.__setattr__(self, "dis", dis)

    @property
    def net(self) -> np.ndarray:
        """Net power delivered to the grid (MW)."""
        return self.dis - self.ch

    @property
    def controls(self) -> list[tuple[float, float]]:
        return list(zip(self.ch.tolist(), self.dis.tolist()))

    @classmethod
    def from_net(cls, grid: TimeGrid, net: Sequence[float]) -> "PowerSchedule":
        net = np.asarray(net, dtype=float)
        return cls(grid, np.maximum(-net, 0.0), np.maximum(net, 0.0))

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "PowerSchedule":
        return cls(grid, np.zeros(grid.steps), np.zeros(grid.steps))


@dataclass(frozen=True, eq=False)
class CurrentSchedule:
    """Applied cell current in A, positive on discharge."""

    grid: TimeGrid
    current: np.ndarray

    def __post_init__(self):
        current = _frozen_array(self.current, "current")
        if len(current) != self.grid.steps:
            raise ValidationError("schedule length does not match the grid")
        if not np.all(np.isfinite(current)):
            raise ValidationError("current must be finite")
        object.__setattr__(self, "current", current)

    @property
    def controls(self) -> list[float]:
        return self.current.tolist()

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "CurrentSchedule":
        return cls(grid, np.zeros(grid.steps))


def pack_power(current: float, voltage: float, n_cells: int) -> float:
    """Pack power in W for ``n_cells`` identical cells: N * I * V."""
    if isinstance(n_cells, bool) or int(n_cells) != n_cells or n_cells < 1:
        raise ValidationError(f"n_cells must be a positive integer, got {n_cells!r}")
    return n_cells * current * voltage


@dataclass(frozen=True)
class StepRecord:
    """One row of a trace: the state after a step and what happened during it.

    Record 0 of a trace holds the initial state with zero power.
    ``throughput_mwh`` and ``capacity_loss`` are cumulative in a trace; a
    model's ``step`` returns the throughput of that step alone.
    """

    state: Any
    soc_fraction: float
    voltage: float = math.nan
    current: float = math.nan
    ch: float = 0.0
    dis: float = 0.0
    cell_power_w: float = math.nan
    pack_power_mw: float = 0.0
    throughput_mwh: float = 0.0
    capacity_loss: float = 0.0


@dataclass(frozen=True, eq=False)
class Trace:
    grid: TimeGrid
    records: tuple[StepRecord, ...]
    model: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.records) != self.grid.steps + 1:
            raise ValidationError("a trace holds one record per step plus the initial state")

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name not in self._cache:
            arr = np.array([getattr(r, name) for r in self.records], dtype=float)
            arr.setflags(write=False)
            self._cache[name] = arr
        return self._cache[name]

    @property
    def states(self) -> list:
        return [r.state for r in self.records]

    @property
    def final_state(self):
        return self.records[-1].state

    @property
    def soc_fraction(self) -> np.ndarray:
        return self.column("soc_fraction")

    @property
    def voltage(self) -> np.ndarray:
        return self.column("voltage")

    @property
    def current(self) -> np.ndarray:
        return self.column("current")

    @property
    def pack_power_mw(self) -> np.ndarray:
        return self.column("pack_power_mw")

    @property
    def throughput_mwh(self) -> np.ndarray:
        return self.column("throughput_mwh")

    @property
    def capacity_loss(self) -> np.ndarray:
        return self.column("capacity_loss")


def run_controls(model, grid: TimeGrid, controls: Iterable) -> Trace:
    """Step ``model`` through ``controls`` from its initial state.

    Fails fast: the first infeasible step raises with its index attached.
    """
    first = model.initial_record()
    records = [first]
    state = first.state
    throughput = 0.0
    for k, u in enumerate(controls):
        try:
            rec = model.step(state, u, grid.tau)
        except InfeasibleStepError as exc:
            raise exc.at_step(k)
        throughput += rec.throughput_mwh
        records.append(replace(rec, throughput_mwh=throughput))
        state = rec.state
    return Trace(grid, tuple(records), model.name)
