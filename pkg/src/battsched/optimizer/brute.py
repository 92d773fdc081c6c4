"""Exhaustive search over a discrete control lattice (small-instance oracle)."""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

from ..core import InfeasibleStepError, TimeGrid, Trace
from .objectives import check_compatible
from .report import ProblemSizeError, SolveReport, SolverFailure

DEFAULT_CAP = 10_000_000


def brute_force(model, objective, control_levels: Sequence, grid: TimeGrid | None = None,
                cap: int = DEFAULT_CAP) -> SolveReport:
    """Best control sequence over ``control_levels`` at every step.

    Sequences are explored depth first; a prefix that leaves the envelope
    is dropped with all its extensions. Among equal values the first
    sequence in lattice order wins.
    """
    grid = grid or objective.grid
    check_compatible(model, objective)
    levels = list(control_levels)
    if not levels:
        raise ProblemSizeError("no control levels given")
    size = len(levels) ** grid.steps
    if size > cap:
        raise ProblemSizeError(f"{len(levels)}^{grid.steps} = {size} sequences exceeds the cap of {cap}")

    first = model.initial_record()
    records = [first]
    path: list = []
    best = {"value": float("-inf"), "path": None, "records": None}
    leaves = 0

    def dfs(t: int, throughput: float):
        nonlocal leaves
        if t == grid.steps:
            leaves += 1
            trace = Trace(grid, tuple(records), model.name)
            v = objective.value(trace)
            if v > best["value"]:
                best.update(value=v, path=list(path), records=tuple(records))
            return
        state = records[-1].state
        for u in levels:
            try:
                rec = model.step(state, u, grid.tau)
            except InfeasibleStepError:
                continue
            thr = throughput + rec.throughput_mwh
            records.append(replace(rec, throughput_mwh=thr))
            path.append(u)
            dfs(t + 1, thr)
            path.pop()
            records.pop()

    dfs(0, 0.0)
    if best["path"] is None:
        raise SolverFailure("no feasible control sequence on the lattice",
                            {"sequences": size, "levels": len(levels)})
    schedule = model.schedule_from_controls(grid, best["path"])
    trace = Trace(grid, best["records"], model.name)
    return SolveReport(
        schedule=schedule,
        value=best["value"],
        model=model.name,
        solver="brute_force",
        certified=True,
        trace=trace,
        diagnostics={"sequences": size, "feasible_leaves": leaves, "levels": len(levels)},
    )
