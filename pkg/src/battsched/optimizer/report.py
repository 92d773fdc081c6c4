"""Result containers shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..core import BatteryError, Trace


@dataclass(frozen=True, eq=False)
class SolveReport:
    """A solver's answer.

    ``certified`` is True only when ``schedule`` was re-simulated under the
    strict model without any violation; ``trace`` is that simulation.
    """

    schedule: Any
    value: float
    model: str
    solver: str
    certified: bool
    trace: Trace | None = None
    diagnostics: dict = field(default_factory=dict)


class SolverFailure(BatteryError):
    """No certified-feasible schedule could be produced."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ProblemSizeError(BatteryError):
    """An exhaustive search would exceed its configured size cap."""
