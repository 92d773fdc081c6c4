"""Backward-induction dynamic programming for the energy and circuit models.

Two state spaces are offered:

* ``mode="grid"``: a uniform grid (SoE for the energy model, SoC x v_d
  for the circuit model) with the value function linearly interpolated
  between nodes;
* ``mode="exact"``: the finite set of states actually reachable from the
  initial state under the control lattice. With this mode the optimum is
  exact over the lattice and matches exhaustive search.

The returned schedule is always re-simulated with the strict model.
Ties between controls go to the lower next state.

Non-additive objectives are handled around the additive core:

* peak shaving: the horizon peak is fixed to each candidate cap in turn
  (steps whose net load would exceed it are forbidden) and the best
  resulting schedule, scored by the true objective, is kept;
* rainflow degradation: the additive DP ignores it, then the rollout is
  improved by single-step changes scored with the true objective. This
  is a heuristic; it is not guaranteed to find the lattice optimum.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..core import InfeasibleStepError, Trace
from ..ecm import ecm_transition
from ..erm import _as_pair, erm_transition
from .objectives import check_compatible
from .report import ProblemSizeError, SolveReport, SolverFailure

log = logging.getLogger(__name__)

# stand-in for -inf that survives linear interpolation
DEAD = -1e30
_ALIVE = DEAD / 2
TIE_RTOL = 1e-12
MAX_EXACT_STATES = 200_000


def _is_better(value: float, key, best_value: float, best_key) -> bool:
    if best_key is None:
        return True
    tol = TIE_RTOL * max(1.0, abs(best_value))
    if value > best_value + tol:
        return True
    return abs(value - best_value) <= tol and key < best_key


def _state_key(model, state) -> tuple:
    if model.name == "erm":
        return (round(state.soe / model.params.e_max, 12),)
    if model.name == "ecm":
        return (round(state.soc / model.params.q_max, 12), round(state.v_d, 12))
    raise ProblemSizeError(f"dynamic programming is not available for model {model.name!r}")


def _stage(objective, t: int, rec) -> float:
    return objective.stage_reward(t, rec.pack_power_mw, rec.throughput_mwh)


def _peak_ok(objective, cap, t: int, pack_mw) -> bool | np.ndarray:
    if cap is None:
        return True
    return objective.load[t] - pack_mw <= cap + 1e-9 * max(1.0, abs(cap))


def _finish(model, objective, grid, controls, solver: str, diagnostics: dict) -> SolveReport:
    schedule = model.schedule_from_controls(grid, controls)
    trace = model.simulate(schedule)
    return SolveReport(schedule=schedule, value=objective.value(trace), model=model.name,
                       solver=solver, certified=True, trace=trace, diagnostics=diagnostics)


# --------------------------------------------------------------------------
# exact reachable-state DP


class _ReachableGraph:
    """Layered graph of reachable states; one layer per time step."""

    def __init__(self, model, objective, levels, grid):
        self.layers = []  # t -> sorted list of keys
        self.edges = []  # t -> {key: [(reward, pack_mw, next_key, u_index)]}
        states = {_state_key(model, model.init): model.init}
        for t in range(grid.steps):
            keys = sorted(states)
            self.layers.append(keys)
            edges = {}
            nxt_states = {}
            for key in keys:
                out = []
                for i, u in enumerate(levels):
                    try:
                        rec = model.step(states[key], u, grid.tau)
                    except InfeasibleStepError:
                        continue
                    nk = _state_key(model, rec.state)
                    nxt_states.setdefault(nk, rec.state)
                    out.append((_stage(objective, t, rec), rec.pack_power_mw, nk, i))
                edges[key] = out
            self.edges.append(edges)
            states = nxt_states
            if len(states) > MAX_EXACT_STATES:
                raise ProblemSizeError(
                    f"{len(states)} reachable states at step {t + 1} exceeds {MAX_EXACT_STATES}; "
                    "use mode='grid'")
        self.layers.append(sorted(states))

    @property
    def n_states(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def solve(self, objective, cap=None) -> list[int] | None:
        steps = len(self.edges)
        value = {k: 0.0 for k in self.layers[-1]}
        policy = []
        for t in range(steps - 1, -1, -1):
            v_t, p_t = {}, {}
            for key in self.layers[t]:
                best_v, best_k, best_i = DEAD, None, None
                for reward, pack_mw, nk, i in self.edges[t][key]:
                    cont = value[nk]
                    if cont <= _ALIVE or not _peak_ok(objective, cap, t, pack_mw):
                        continue
                    v = reward + cont
                    if _is_better(v, nk, best_v, best_k):
                        best_v, best_k, best_i = v, nk, i
                v_t[key] = best_v
                p_t[key] = (best_i, best_k)
            value = v_t
            policy.append(p_t)
        policy.reverse()
        key = self.layers[0][0]
        if value[key] <= _ALIVE:
            return None
        path = []
        for t in range(steps):
            i, key = policy[t][key]
            path.append(i)
        return path


# --------------------------------------------------------------------------
# uniform-grid DP


class _GridValue:
    """Value functions on a uniform state grid, one per step."""

    def __init__(self, model, sizes):
        self.model = model
        if model.name == "erm":
            n = int(sizes[0]) if isinstance(sizes, (tuple, list)) else int(sizes)
            if n < 2:
                raise ProblemSizeError("state grid needs at least 2 points")
            self.axes = (np.linspace(0.0, model.params.e_max, n),)
        elif model.name == "ecm":
            n1, n2 = (sizes, sizes) if np.isscalar(sizes) else sizes
            p = model.params
            if n1 < 2 or n2 < 2:
                raise ProblemSizeError("state grid needs at least 2 points per axis")
            lo, hi = -p.rd * p.i_max_ch, p.rd * p.i_max_dis
            if hi - lo <= 0:
                hi, lo = 1e-9, -1e-9
            self.axes = (np.linspace(0.0, p.q_max, int(n1)), np.linspace(lo, hi, int(n2)))
        else:
            raise ProblemSizeError(f"dynamic programming is not available for model {model.name!r}")
        self.values: list[np.ndarray] = []

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    def interp(self, values: np.ndarray, *coords) -> np.ndarray:
        if len(self.axes) == 1:
            x = np.asarray(coords[0], dtype=float)
            out = np.interp(x, self.axes[0], values, left=DEAD, right=DEAD)
            return out
        f = RegularGridInterpolator(self.axes, values, method="linear", bounds_error=False, fill_value=DEAD)
        pts = np.stack([np.ravel(c) for c in coords], axis=-1)
        return f(pts).reshape(np.shape(coords[0]))

    def backward(self, objective, levels, grid, cap=None) -> bool:
        model = self.model
        tau_h = grid.tau_hours
        nxt = np.zeros(self.shape)
        values = [nxt]
        for t in range(grid.steps - 1, -1, -1):
            best = np.full(self.shape, DEAD)
            for u in levels:
                if model.name == "erm":
                    ch, dis = _as_pair(u)
                    (s,) = self.axes
                    s_next, ok = erm_transition(s, ch, dis, model.params, grid.tau)
                    pack = dis - ch
                    reward = objective.stage_reward(t, pack, (ch + dis) * tau_h)
                    ok = ok & _peak_ok(objective, cap, t, pack)
                    cont = self.interp(nxt, s_next)
                else:
                    soc, vd = np.meshgrid(*self.axes, indexing="ij")
                    current = float(u)
                    soc_n, vd_n, volts, ok = ecm_transition(soc, vd, current, model.params, grid.tau)
                    pack = model.params.n_cells * current * volts / 1e6
                    reward = (objective.prices.prices[t] * pack * tau_h
                              - objective.degradation.dollars_per_mwh * np.abs(pack) * tau_h)
                    ok = ok & _peak_ok(objective, cap, t, pack)
                    cont = self.interp(nxt, soc_n, vd_n)
                cand = np.where(ok & (cont > _ALIVE), reward + cont, DEAD)
                best = np.maximum(best, cand)
            values.append(best)
            nxt = best
        values.reverse()
        self.values = values
        return True

    def continuation(self, t: int, state) -> float:
        if self.model.name == "erm":
            return float(self.interp(self.values[t], state.soe))
        return float(self.interp(self.values[t], np.array(state.soc), np.array(state.v_d)))

    def rollout(self, objective, levels, grid, cap=None) -> list[int] | None:
        model = self.model
        state = model.init
        path = []
        for t in range(grid.steps):
            best_v, best_k, best = DEAD, None, None
            for i, u in enumerate(levels):
                try:
                    rec = model.step(state, u, grid.tau)
                except InfeasibleStepError:
                    continue
                if not _peak_ok(objective, cap, t, rec.pack_power_mw):
                    continue
                cont = self.continuation(t + 1, rec.state)
                if cont <= _ALIVE:
                    continue
                v = _stage(objective, t, rec) + cont
                key = _state_key(model, rec.state)
                if _is_better(v, key, best_v, best_k):
                    best_v, best_k, best = v, key, (i, rec.state)
            if best is None:
                return None
            path.append(best[0])
            state = best[1]
        return path


# --------------------------------------------------------------------------


def _peak_caps(model, objective, levels, n_caps: int) -> list:
    load = objective.load
    if model.name == "erm":
        packs = sorted({_as_pair(u)[1] - _as_pair(u)[0] for u in levels})
        caps = {float(l - p) for l in load for p in packs}
    else:
        lo = float(load.min()) - model.n_cells * model.params.i_max_dis * model.params.v_max / 1e6
        caps = set(np.linspace(lo, float(load.max()), n_caps).tolist())
    top = float(load.max())
    return sorted(c for c in caps if c <= top + 1e-12) or [top]


def _local_search(model, objective, levels, grid, path, max_passes: int) -> tuple[list[int], int]:
    """Improve a lattice path by single-step changes, scored with the true objective."""

    def score(p):
        try:
            trace = model.simulate(model.schedule_from_controls(grid, [levels[i] for i in p]))
        except InfeasibleStepError:
            return None
        return objective.value(trace)

    best = score(path)
    passes = 0
    for passes in range(1, max_passes + 1):
        improved = False
        for t in range(grid.steps):
            for i in range(len(levels)):
                if i == path[t]:
                    continue
                cand = path[:t] + [i] + path[t + 1:]
                v = score(cand)
                if v is not None and v > best + TIE_RTOL * max(1.0, abs(best)):
                    best, path, improved = v, cand, True
        if not improved:
            break
    return path, passes


def dp_solve(model, objective, control_levels: Sequence, state_grid_sizes=101,
             mode: str = "grid", n_caps: int = 41, local_passes: int = 5) -> SolveReport:
    """Optimal lattice schedule for the energy or circuit model.

    Args:
        control_levels: per-step control choices, ``(ch, dis)`` pairs or
            signed net MW for the energy model, cell currents in A for the
            circuit model.
        state_grid_sizes: points per state axis (``mode="grid"``); an int
            or ``(n_soc, n_vd)`` for the circuit model.
        mode: ``"grid"`` or ``"exact"``.
        n_caps: peak caps tried for peak shaving on the circuit model.
        local_passes: improvement sweeps for rainflow degradation.

    Raises:
        SolverFailure: when no feasible policy exists on the chosen grid.
    """
    check_compatible(model, objective)
    grid = objective.grid
    levels = list(control_levels)
    if not levels:
        raise ProblemSizeError("no control levels given")
    if mode not in ("grid", "exact"):
        raise ValueError(f"unknown DP mode {mode!r}")
    if model.name not in ("erm", "ecm"):
        raise ProblemSizeError(f"dynamic programming is not available for model {model.name!r}")

    caps = _peak_caps(model, objective, levels, n_caps) if objective.has_peak_term else [None]
    if mode == "exact":
        engine = _ReachableGraph(model, objective, levels, grid)
        diagnostics = {"mode": "exact", "reachable_states": engine.n_states}

        def run(cap):
            return engine.solve(objective, cap)
    else:
        engine = _GridValue(model, state_grid_sizes)
        diagnostics = {"mode": "grid", "state_grid": list(engine.shape)}

        def run(cap):
            engine.backward(objective, levels, grid, cap)
            return engine.rollout(objective, levels, grid, cap)

    best_value, best_path = DEAD, None
    for cap in caps:
        path = run(cap)
        if path is None:
            continue
        if len(caps) == 1:
            best_path = path
            break
        trace = model.simulate(model.schedule_from_controls(grid, [levels[i] for i in path]))
        v = objective.value(trace)
        if v > best_value + TIE_RTOL * max(1.0, abs(best_value)):
            best_value, best_path = v, path
    diagnostics.update(levels=len(levels), caps_tried=len(caps) if caps != [None] else 0)
    if best_path is None:
        raise SolverFailure(
            "no feasible policy on this state grid and control lattice "
            f"({diagnostics}); refine the grid or add smaller control levels", diagnostics)
    if objective.degradation.mode == "rainflow":
        best_path, passes = _local_search(model, objective, levels, grid, best_path, local_passes)
        diagnostics["local_search_passes"] = passes
    log.debug("dp_solve %s: %s", model.name, diagnostics)
    return _finish(model, objective, grid, [levels[i] for i in best_path], f"dp_{mode}", diagnostics)
