"""Penalty + projected-gradient scheduling for the single-particle model.

The decision variables are the cell currents, boxed by the rated current
limits. The search maximises

    J(u) = value(u) - mu * sum(squared envelope violations)

where value(u) is computed on the unchecked particle model and the
envelope is the voltage window and the concentration window of both
electrodes (shells and surface), each shrunk by a safety margin. The
penalty weight mu climbs a fixed ladder; each rung runs projected
gradient ascent with Armijo backtracking from the previous rung's answer.

Gradients come from forward differences (default) or from a reverse sweep
through the recorded steps (``gradient="adjoint"``). The reverse sweep
differentiates the implicit diffusion solve by its transpose, the
Butler-Volmer inversion in closed form, and the SEI flux split through the
implicit-function theorem on its fixed point. Surface values that the
unchecked model clips are treated as locally constant.

A solve is accepted only if some iterate replays without violation on the
strict model; otherwise :class:`SolverFailure` is raised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..core import CurrentSchedule, InfeasibleStepError, ValidationError
from ..degradation import cyclable_lithium, particle_surface_area
from ..spm import (
    SOFT_CLIP,
    diffusion_operator,
    exchange_current,
    flux_from_current,
    spm_advance,
    spm_soc,
)
from .objectives import check_compatible
from .report import SolveReport, SolverFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyConfig:
    ladder: tuple[float, ...] = (1e2, 1e3, 1e4, 1e5, 1e6)
    max_iter: int = 200  # per rung
    rtol: float = 1e-6  # stop when the relative improvement falls below this
    gradient: str = "fd"  # "fd" or "adjoint"
    fd_step: float = 1e-6  # A
    margin_v: float = 0.005  # V, voltage window shrink
    margin_c: float = 0.002  # fraction of each electrode's window
    armijo: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if not self.ladder or any(m <= 0 for m in self.ladder):
            raise ValidationError("penalty ladder must be nonempty and positive")
        if list(self.ladder) != sorted(self.ladder):
            raise ValidationError("penalty ladder must be increasing")
        if self.gradient not in ("fd", "adjoint"):
            raise ValidationError("gradient must be 'fd' or 'adjoint'")
        if self.max_iter < 1 or self.fd_step <= 0:
            raise ValidationError("max_iter and fd_step must be positive")


def _hinge2(x, lo, hi):
    """sum((lo-x)+^2 + (x-hi)+^2) and its derivative."""
    below = np.maximum(lo - x, 0.0)
    above = np.maximum(x - hi, 0.0)
    return float(np.sum(below ** 2 + above ** 2)), 2.0 * (above - below)


def _eta_partials(flux: float, c_surf: float, e, params) -> tuple[float, float]:
    """(d eta/d J, d eta/d c_surf) of the inverted Butler-Volmer law."""
    v2 = params.thermal_voltage2
    j0 = exchange_current(c_surf, e, params)
    x = flux / (2.0 * j0)
    d_j = v2 / math.sqrt(4.0 * j0 * j0 + flux * flux)
    d_c = -v2 * x / math.sqrt(1.0 + x * x) * (e.c_max - 2.0 * c_surf) / (2.0 * (e.c_max - c_surf) * c_surf)
    return d_j, d_c


def _clipped(c_surf: float, e) -> tuple[float, bool]:
    lo, hi = SOFT_CLIP * e.c_max, (1.0 - SOFT_CLIP) * e.c_max
    if c_surf < lo:
        return lo, True
    if c_surf > hi:
        return hi, True
    return c_surf, False


def _potential_partials(flux, c_surf, e, params) -> tuple[float, float]:
    """(d/dJ, d/dc_surf) of eta + OCP at an unclipped surface value."""
    cs, clipped = _clipped(c_surf, e)
    d_j, d_c = _eta_partials(flux, cs, e, params)
    if clipped:
        return d_j, 0.0
    return d_j, d_c + e.ocp.slope(cs / e.c_max) / e.c_max


class SpmProblem:
    """Penalised objective of a current schedule on the unchecked particle model."""

    def __init__(self, model, objective, mu: float, config: PenaltyConfig = PenaltyConfig()):
        if model.name != "spm":
            raise ValidationError("gradient_solve drives the particle model only")
        check_compatible(model, objective)
        if objective.degradation.mode == "rainflow" and config.gradient == "adjoint":
            raise ValidationError("rainflow cost is not differentiable; use gradient='fd'")
        self.model = model
        self.params = model.params
        self.objective = objective
        self.mu = float(mu)
        self.config = config
        self.grid = objective.grid
        p = self.params
        self.v_lo, self.v_hi = p.v_min + config.margin_v, p.v_max - config.margin_v
        self.windows = {}
        for side in ("pos", "neg"):
            e = p.electrode(side)
            m = config.margin_c * (e.c_max_op - e.c_min_op)
            self.windows[side] = (e.c_min_op + m, e.c_max_op - m, e.c_max)

    # forward ---------------------------------------------------------------

    def simulate(self, u: np.ndarray):
        state = self.model.init
        states, tapes = [state], []
        for t in range(self.grid.steps):
            state, tape = spm_advance(state, float(u[t]), self.params, self.grid.tau,
                                      self.model.degrade, strict=False)
            states.append(state)
            tapes.append(tape)
        return states, tapes

    def _economics(self, u, volts, states):
        """(value, d value/d P per step) with P in MW."""
        obj = self.objective
        n = self.params.n_cells
        tau_h = self.grid.tau_hours
        pack = n * u * volts / 1e6
        price = obj.prices.prices
        value = float(np.dot(price, pack)) * tau_h
        g_p = price * tau_h
        if obj.has_peak_term:
            net = obj.load - pack
            k = int(np.argmax(net))
            value = obj.bill(obj.load) - obj.bill(net)
            g_p = g_p.copy()
            g_p[k] += obj.demand_charge
        deg = obj.degradation
        if deg.mode == "throughput":
            c = deg.dollars_per_mwh
            value -= c * float(np.sum(np.abs(pack))) * tau_h
            g_p = g_p - c * np.sign(pack) * tau_h
        elif deg.mode == "sei":
            value -= deg.dollars_per_loss * (states[-1].li_loss - states[0].li_loss) / cyclable_lithium(self.params.neg)
        elif deg.mode == "rainflow":
            soc = np.array([spm_soc(s, self.params) / self.params.q_rated for s in states])
            from ..degradation import cycle_fade, rainflow_cycles
            value -= deg.dollars_per_loss * cycle_fade(rainflow_cycles(soc), deg.stress)
        return value, g_p

    def _penalty_terms(self, tape):
        """Penalty sum for one step and its partials (V, c_pos, c_neg, cs_pos, cs_neg)."""
        pv, dv = _hinge2(np.array([tape.voltage]), self.v_lo, self.v_hi)
        total = pv
        parts = {"v": float(dv[0])}
        for side, conc, cs in (("pos", tape.conc_pos, tape.cs_pos), ("neg", tape.conc_neg, tape.cs_neg)):
            lo, hi, cmax = self.windows[side]
            pc, dc = _hinge2(conc / cmax, lo / cmax, hi / cmax)
            ps, ds = _hinge2(np.array([cs / cmax]), lo / cmax, hi / cmax)
            total += pc + ps
            parts["c_" + side] = dc / cmax
            parts["cs_" + side] = float(ds[0]) / cmax
        return total, parts

    def evaluate(self, u) -> dict:
        u = np.asarray(u, dtype=float)
        states, tapes = self.simulate(u)
        volts = np.array([tp.voltage for tp in tapes])
        value, _ = self._economics(u, volts, states)
        penalty = sum(self._penalty_terms(tp)[0] for tp in tapes)
        return {"value": value, "penalty": penalty, "objective": value - self.mu * penalty}

    def __call__(self, u) -> float:
        return self.evaluate(u)["objective"]

    # gradients -------------------------------------------------------------

    def fd_gradient(self, u, step: float | None = None, central: bool = False) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        h = step or self.config.fd_step
        base = None if central else self(u)
        g = np.zeros_like(u)
        for t in range(len(u)):
            up = u.copy()
            up[t] += h
            if central:
                dn = u.copy()
                dn[t] -= h
                g[t] = (self(up) - self(dn)) / (2.0 * h)
            else:
                g[t] = (self(up) - base) / h
        return g

    def adjoint_gradient(self, u) -> np.ndarray:
        """Exact gradient of the penalised objective by a reverse sweep."""
        u = np.asarray(u, dtype=float)
        p = self.params
        pos, neg = p.pos, p.neg
        tau = self.grid.tau
        states, tapes = self.simulate(u)
        volts = np.array([tp.voltage for tp in tapes])
        _, g_pack = self._economics(u, volts, states)
        op_p = diffusion_operator(pos, p.n_shells, tau, p.scheme)
        op_n = diffusion_operator(neg, p.n_shells, tau, p.scheme)
        a_p = flux_from_current(1.0, "pos", p)
        a_n = flux_from_current(1.0, "neg", p)
        # c_surf = w_last * c[-1] + w_prev * c[-2] + g * J
        wl_p, wp_p, sg_p = op_p.surf_w
        wl_n, wp_n, sg_n = op_n.surf_w
        degrade = self.model.degrade
        sei = p.sei
        area = particle_surface_area(neg)
        beta = 1.0 / p.thermal_voltage2

        lam_p = np.zeros(p.n_shells)
        lam_n = np.zeros(p.n_shells)
        lam_delta = 0.0
        lam_loss = 0.0
        deg = self.objective.degradation
        if deg.mode == "sei":
            lam_loss = -deg.dollars_per_loss / cyclable_lithium(neg)
        n = p.n_cells
        grad = np.zeros_like(u)
        for t in range(len(u) - 1, -1, -1):
            tp = tapes[t]
            cur = tp.current
            _, parts = self._penalty_terms(tp)
            g_v = g_pack[t] * n * cur / 1e6 - self.mu * parts["v"]
            g_u = g_pack[t] * n * tp.voltage / 1e6
            lam_p = lam_p - self.mu * parts["c_pos"]
            lam_n = lam_n - self.mu * parts["c_neg"]

            dj_p, dc_p = _potential_partials(tp.j_pos, tp.cs_pos, pos, p)
            dj_n, dc_n = _potential_partials(tp.j_li, tp.cs_neg, neg, p)
            g_cs_p = -self.mu * parts["cs_pos"] + g_v * dc_p
            g_cs_n = -self.mu * parts["cs_neg"] - g_v * dc_n
            lam_p[-1] += wl_p * g_cs_p
            lam_p[-2] += wp_p * g_cs_p
            lam_n[-1] += wl_n * g_cs_n
            lam_n[-2] += wp_n * g_cs_n
            g_jp = g_v * dj_p + sg_p * g_cs_p
            g_jl = -g_v * dj_n + sg_n * g_cs_n
            g_u += g_v * (-pos.z0 - tp.z_neg)
            if degrade:
                lam_delta += g_v * (-cur) / (sei.conductivity * area)

            lam_p, d = op_p.adjoint(lam_p)
            g_jp += d
            lam_n, d = op_n.adjoint(lam_n)
            g_jl += d

            g_s = 0.0
            if tp.j_sei != 0.0:
                g_s = -tau * (sei.molar_mass / sei.density) * lam_delta - tau * area * lam_loss
            g_jn = g_jl
            g_s -= g_jl
            if tp.j_sei != 0.0:
                # s = T(f(j_n - s, c_start)) solved by fixed point; differentiate the residual
                c_start = states[t].conc_neg
                cs = wl_n * c_start[-1] + wp_n * c_start[-2] + sg_n * tp.j_li
                f_j, f_c = _potential_partials(tp.j_li, cs, neg, p)
                f_j = f_j + sg_n * f_c
                t_prime = -beta * tp.j_sei
                denom = 1.0 + t_prime * f_j
                g_jn += g_s * t_prime * f_j / denom
                lam_n[-1] += g_s * t_prime * f_c * wl_n / denom
                lam_n[-2] += g_s * t_prime * f_c * wp_n / denom
            g_u += a_p * g_jp + a_n * g_jn
            grad[t] = g_u
        return grad

    def gradient(self, u) -> np.ndarray:
        if self.config.gradient == "adjoint":
            return self.adjoint_gradient(u)
        return self.fd_gradient(u)


def _ascend(problem: SpmProblem, u, lo, hi, config: PenaltyConfig):
    """Projected gradient ascent with Armijo backtracking."""
    f = problem(u)
    alpha = None
    iters = 0
    converged = False
    for iters in range(1, config.max_iter + 1):
        g = problem.gradient(u)
        gmax = float(np.max(np.abs(g)))
        if gmax == 0.0:
            converged = True
            break
        if alpha is None:
            alpha = 0.1 * float(np.max(hi - lo)) / gmax
        accepted = False
        for _ in range(config.max_backtracks):
            cand = np.clip(u + alpha * g, lo, hi)
            step = cand - u
            if not np.any(step):
                break
            fc = problem(cand)
            if fc >= f + config.armijo * float(np.dot(g, step)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True
            break
        gain = fc - f
        u, f = cand, fc
        alpha *= 2.0
        if gain <= config.rtol * max(abs(f), 1.0):
            converged = True
            break
    return u, f, iters, converged


def _certify(model, grid, u):
    try:
        return model.simulate(CurrentSchedule(grid, u))
    except InfeasibleStepError:
        return None


def gradient_solve(model, objective, init_schedule: CurrentSchedule | None = None,
                   config: PenaltyConfig = PenaltyConfig()) -> SolveReport:
    """Penalty-ladder projected-gradient schedule for the particle model.

    Returns the best iterate that replays cleanly on the strict model.
    Candidates are the end of every rung, the starting schedule, and the
    largest feasible scaling of the final iterate.

    Raises:
        SolverFailure: when no candidate is feasible.
    """
    grid = objective.grid
    lo_b, hi_b = model.current_bounds()
    lo = np.full(grid.steps, lo_b)
    hi = np.full(grid.steps, hi_b)
    u = np.zeros(grid.steps) if init_schedule is None else np.array(init_schedule.current, dtype=float)
    if len(u) != grid.steps:
        raise ValidationError("initial schedule length does not match the horizon")
    u = np.clip(u, lo, hi)
    candidates = [("init", u.copy())]
    rungs = []
    for mu in config.ladder:
        problem = SpmProblem(model, objective, mu, config)
        u, f, iters, conv = _ascend(problem, u, lo, hi, config)
        terms = problem.evaluate(u)
        rungs.append({"mu": mu, "iterations": iters, "converged": conv,
                      "value": terms["value"], "penalty": terms["penalty"]})
        candidates.append((f"rung_{mu:g}", u.copy()))
        log.debug("rung mu=%g: %d iterations, value %.6g, penalty %.3g", mu, iters, terms["value"], terms["penalty"])

    # largest feasible scaling of the final iterate
    if _certify(model, grid, u) is None:
        a, b = 0.0, 1.0
        for _ in range(30):
            mid = 0.5 * (a + b)
            if _certify(model, grid, u * mid) is None:
                b = mid
            else:
                a = mid
        candidates.append(("scaled", u * a))

    best = None
    for label, cand in candidates:
        trace = _certify(model, grid, cand)
        if trace is None:
            continue
        v = objective.value(trace)
        if best is None or v > best[0]:
            best = (v, label, cand, trace)
    diagnostics = {"rungs": rungs, "gradient": config.gradient,
                   "iterations": sum(r["iterations"] for r in rungs),
                   "converged": all(r["converged"] for r in rungs)}
    if best is None:
        raise SolverFailure("no certified-feasible schedule found", diagnostics)
    value, label, cand, trace = best
    diagnostics["selected"] = label
    return SolveReport(schedule=CurrentSchedule(grid, cand), value=value, model=model.name,
                       solver="gradient", certified=True, trace=trace, diagnostics=diagnostics)
