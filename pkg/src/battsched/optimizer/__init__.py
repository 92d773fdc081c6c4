"""Schedule optimisation and cross-model replay."""

from .brute import brute_force
from .dp import dp_solve
from .gradient import PenaltyConfig, SpmProblem, gradient_solve
from .objectives import (
    ArbitrageObjective,
    Degradation,
    EvaluationError,
    PeakShavingObjective,
    evaluate,
)
from .replay import ReplayReport, Violation, power_to_current, replay
from .report import ProblemSizeError, SolveReport, SolverFailure

__all__ = [
    "ArbitrageObjective", "Degradation", "EvaluationError", "PeakShavingObjective",
    "PenaltyConfig", "ProblemSizeError", "ReplayReport", "SolveReport", "SolverFailure",
    "SpmProblem", "Violation", "brute_force", "dp_solve", "evaluate", "gradient_solve",
    "power_to_current", "replay",
]
