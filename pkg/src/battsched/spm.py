"""Single-particle (concentration-current) lithium-ion cell model.

Each electrode is one spherical particle. Lithium diffuses radially,

    dc/dt = D/r^2 d/dr (r^2 dc/dr),   dc/dr = 0 at r=0,   D dc/dr = -J at r=R,

discretised with a conservative finite-volume scheme on equal-thickness
shells (backward Euler by default). The surface flux J follows from the
applied current, Butler-Volmer kinetics give the activation overpotential,
and the terminal voltage is the difference of the two solid-phase
potentials. Optionally a Tafel side reaction grows an SEI film on the
negative electrode while charging (see :mod:`battsched.degradation`).

Sign conventions: current I is positive on discharge; J > 0 means lithium
leaves the particle. Each electrode carries the cell current, signed like
its flux (I_pos = -I, I_neg = +I), so film resistances always lower the
voltage on discharge and raise it on charge.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .core import (
    FEAS_RTOL,
    ConfigurationError,
    CurrentSchedule,
    InfeasibleStepError,
    SaturationError,
    StepRecord,
    StepSizeError,
    TimeGrid,
    Trace,
    ValidationError,
    run_controls,
)
from .degradation import (
    DegradationLedger,
    SeiParams,
    cyclable_lithium,
    film_resistance,
    sei_split,
    sei_update,
)
from .ecm import check_current, check_voltage

# Surface stoichiometry is kept this far from 0 and 1 when the unchecked
# (penalised) model evaluates kinetics outside the physical range.
SOFT_CLIP = 1e-6


@dataclass(frozen=True)
class OcpCurve:
    """Open-circuit potential against surface stoichiometry c_surf/c_max.

    Interpolated with a monotone cubic (PCHIP) so the potential has a
    continuous slope; outside [0, 1] the end values are held.
    """

    stoich: tuple[float, ...]
    volts: tuple[float, ...]
    _coef: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = tuple(float(v) for v in self.stoich)
        y = tuple(float(v) for v in self.volts)
        if len(x) != len(y) or len(x) < 2:
            raise ValidationError("OCP curve needs at least two (stoichiometry, volts) pairs")
        if x[0] != 0.0 or x[-1] != 1.0 or any(b <= a for a, b in zip(x, x[1:])):
            raise ValidationError("OCP stoichiometry must increase strictly from 0 to 1")
        dy = np.diff(y)
        if not (np.all(dy > 0) or np.all(dy < 0)):
            raise ValidationError("OCP must be strictly monotone")
        object.__setattr__(self, "stoich", x)
        object.__setattr__(self, "volts", y)
        c = PchipInterpolator(x, y).c
        object.__setattr__(self, "_coef", tuple(tuple(float(v) for v in c[:, i]) for i in range(c.shape[1])))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "OcpCurve":
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def pairs(self) -> list[list[float]]:
        return [[s, v] for s, v in zip(self.stoich, self.volts)]

    def _segment(self, x: float) -> tuple[int, float]:
        x = min(max(x, 0.0), 1.0)
        i = min(max(bisect_right(self.stoich, x) - 1, 0), len(self._coef) - 1)
        return i, x - self.stoich[i]

    def __call__(self, x: float) -> float:
        i, dx = self._segment(x)
        a, b, c, d = self._coef[i]
        return ((a * dx + b) * dx + c) * dx + d

    def slope(self, x: float) -> float:
        """dOCP/dx; zero outside [0, 1] where the curve is held flat."""
        if x < 0.0 or x > 1.0:
            return 0.0
        i, dx = self._segment(x)
        a, b, c, _ = self._coef[i]
        return (3 * a * dx + 2 * b) * dx + c


@dataclass(frozen=True)
class ElectrodeParams:
    radius: float  # m
    diff: float  # m^2/s
    k: float  # reaction rate constant (absorbs units)
    c_max: float  # mol/m^3
    c_min_op: float  # mol/m^3
    c_max_op: float  # mol/m^3
    eps: float  # active-material volume fraction
    vol: float  # electrode volume, m^3
    z0: float  # film resistance, ohm
    ocp: OcpCurve

    def __post_init__(self):
        if not 0.0 < self.c_min_op < self.c_max_op <= self.c_max:
            raise ValidationError("need 0 < c_min_op < c_max_op <= c_max")
        for name in ("radius", "diff", "k", "eps", "vol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"electrode {name} must be positive")
        if self.z0 < 0:
            raise ValidationError("electrode film resistance must be nonnegative")


@dataclass(frozen=True)
class SpmParams:
    pos: ElectrodeParams
    neg: ElectrodeParams
    c_el: float  # mol/m^3
    temp: float  # K
    v_min: float
    v_max: float
    i_max_ch: float  # A
    i_max_dis: float  # A
    n_cells: int
    q_rated: float  # Ah
    n_shells: int = 10
    faraday: float = 96485.0
    gas_const: float = 8.314
    scheme: str = "implicit"
    sei: SeiParams | None = None

    def __post_init__(self):
        if not self.c_el > 0 or not self.temp > 0:
            raise ValidationError("c_el and temp must be positive")
        if not self.v_min < self.v_max:
            raise ValidationError("v_min must be below v_max")
        if self.i_max_ch < 0 or self.i_max_dis < 0:
            raise ValidationError("current bounds must be nonnegative")
        if isinstance(self.n_shells, bool) or int(self.n_shells) != self.n_shells or self.n_shells < 3:
            raise ValidationError("n_shells must be an integer >= 3")
        if isinstance(self.n_cells, bool) or int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValidationError("n_cells must be a positive integer")
        if not self.q_rated > 0:
            raise ValidationError("q_rated must be positive")
        if self.scheme not in ("implicit", "explicit"):
            raise ValidationError(f"unknown diffusion scheme {self.scheme!r}")
        object.__setattr__(self, "n_shells", int(self.n_shells))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def thermal_voltage2(self) -> float:
        """2RT/F in volts."""
        return 2.0 * self.gas_const * self.temp / self.faraday

    def electrode(self, side: str) -> ElectrodeParams:
        if side == "pos":
            return self.pos
        if side == "neg":
            return self.neg
        raise ValidationError(f"side must be 'pos' or 'neg', got {side!r}")


@dataclass(frozen=True, eq=False)
class SpmState:
    conc_pos: np.ndarray  # shell-averaged, centre outwards, mol/m^3
    conc_neg: np.ndarray
    sei_thickness: float = 0.0  # m
    li_loss: float = 0.0  # mol of lithium consumed by the side reaction

    def __post_init__(self):
        for name in ("conc_pos", "conc_neg"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.sei_thickness < 0:
            raise ValidationError("sei_thickness must be nonnegative")


# --------------------------------------------------------------------------
# radial diffusion


@lru_cache(maxsize=256)
def surface_weights(radius: float, diff: float, n: int) -> tuple[float, float, float]:
    """Coefficients (w_last, w_prev, g) of the surface reconstruction.

    c_surf = w_last * c[-1] + w_prev * c[-2] + g * J comes from the
    quadratic in (r - R) whose slope at the surface is -J/D and whose
    averages over the two outer shells equal their stored values. It is
    exact for the parabolic profile a steady flux settles into.
    """
    h = radius / n

    def avg(m: int, a: float, b: float) -> float:
        # shell average of s**m with s = r - R over s in [a, b], weight r**2
        poly = Polynomial([0.0] * m + [1.0]) * Polynomial([radius ** 2, 2 * radius, 1.0])
        prim = poly.integ()
        vol = Polynomial([radius ** 2, 2 * radius, 1.0]).integ()
        return (prim(b) - prim(a)) / (vol(b) - vol(a))

    a1_n, a2_n = avg(1, -h, 0.0), avg(2, -h, 0.0)
    a1_p, a2_p = avg(1, -2 * h, -h), avg(2, -2 * h, -h)
    d1, d2 = a1_n - a1_p, a2_n - a2_p
    w_prev = a2_n / d2
    return 1.0 - w_prev, w_prev, (a1_n - a2_n * d1 / d2) / diff


class ShellDiffusion:
    """Finite-volume diffusion operator for one particle and time step.

    Shell k spans [k h, (k+1) h]; volumes and face areas are taken per
    unit solid angle. Fluxes between shells use the difference of shell
    averages, so the discrete lithium inventory changes only through the
    outer boundary: sum(vol*c) drops by tau * J * R^2 per step.
    """

    def __init__(self, radius: float, diff: float, n: int, tau: float, scheme: str = "implicit"):
        self.radius, self.diff, self.n, self.tau, self.scheme = radius, diff, n, tau, scheme
        h = radius / n
        self.h = h
        r = np.arange(n + 1) * h
        self.vol = (r[1:] ** 3 - r[:-1] ** 3) / 3.0
        g = diff * r ** 2 / h  # face conductance; g[0] is the centre
        lower = np.zeros(n)  # L[k, k-1]
        upper = np.zeros(n)  # L[k, k+1]
        diag = np.zeros(n)
        for k in range(n):
            if k > 0:
                lower[k] = -g[k] / self.vol[k]
                diag[k] += g[k] / self.vol[k]
            if k < n - 1:
                upper[k] = -g[k + 1] / self.vol[k]
                diag[k] += g[k + 1] / self.vol[k]
        self.boundary_gain = radius ** 2 / self.vol[-1]
        self.surf_w = surface_weights(radius, diff, n)
        if scheme == "implicit":
            ab = np.zeros((3, n))
            ab[0, 1:] = tau * upper[:-1]
            ab[1] = 1.0 + tau * diag
            ab[2, :-1] = tau * lower[1:]
            abt = np.zeros((3, n))
            abt[0, 1:] = tau * lower[1:]
            abt[1] = ab[1]
            abt[2, :-1] = tau * upper[:-1]
            self._ab, self._abt = ab, abt
        elif scheme == "explicit":
            limit = 1.0 / diag.max()
            if tau > limit:
                raise ConfigurationError(
                    f"explicit diffusion unstable: tau={tau:.6g} s exceeds {limit:.6g} s "
                    f"for R={radius:.3g} m, D={diff:.3g} m^2/s, {n} shells")
            mat = np.diag(1.0 - tau * diag) + np.diag(-tau * upper[:-1], 1) + np.diag(-tau * lower[1:], -1)
            self._mat = mat
        else:
            raise ConfigurationError(f"unknown diffusion scheme {scheme!r}")

    def advance(self, conc: np.ndarray, flux: float) -> np.ndarray:
        if self.scheme == "implicit":
            rhs = np.array(conc, dtype=float)
            rhs[-1] -= self.tau * flux * self.boundary_gain
            return solve_banded((1, 1), self._ab, rhs, check_finite=False)
        out = self._mat @ conc
        out[-1] -= self.tau * flux * self.boundary_gain
        return out

    def adjoint(self, sens: np.ndarray) -> tuple[np.ndarray, float]:
        """Pull a sensitivity on the advanced profile back to (profile, flux)."""
        if self.scheme == "implicit":
            w = solve_banded((1, 1), self._abt, np.asarray(sens, dtype=float), check_finite=False)
            return w, -self.tau * self.boundary_gain * w[-1]
        return self._mat.T @ sens, -self.tau * self.boundary_gain * sens[-1]

    def mean(self, conc: np.ndarray) -> float:
        """Volume-weighted average concentration."""
        return float(self.vol @ conc) * 3.0 / self.radius ** 3

    def surface(self, conc: np.ndarray, flux: float) -> float:
        """Surface value reconstructed from the two outer shells and the imposed gradient."""
        w_last, w_prev, g = self.surf_w
        return float(w_last * conc[-1] + w_prev * conc[-2] + g * flux)


@lru_cache(maxsize=256)
def _diffusion(radius: float, diff: float, n: int, tau: float, scheme: str) -> ShellDiffusion:
    return ShellDiffusion(radius, diff, n, tau, scheme)


def diffusion_operator(electrode: ElectrodeParams, n_shells: int, tau: float, scheme: str = "implicit") -> ShellDiffusion:
    return _diffusion(electrode.radius, electrode.diff, n_shells, float(tau), scheme)


def diffuse_step(conc, flux: float, electrode: ElectrodeParams, tau: float,
                 scheme: str = "implicit") -> np.ndarray:
    """Advance one particle's radial profile by ``tau`` seconds under surface flux ``flux``."""
    conc = np.asarray(conc, dtype=float)
    op = diffusion_operator(electrode, len(conc), tau, scheme)
    out = op.advance(conc, flux)
    if np.any(out < 0):
        raise StepSizeError(
            f"negative concentration {out.min():.6g} mol/m^3 after a {tau:.6g} s step; reduce the step")
    return out


def surface_concentration(conc, flux: float, electrode: ElectrodeParams) -> float:
    w_last, w_prev, g = surface_weights(electrode.radius, electrode.diff, len(conc))
    return float(w_last * conc[-1] + w_prev * conc[-2] + g * flux)


# --------------------------------------------------------------------------
# kinetics


def flux_from_current(current: float, side: str, params: SpmParams) -> float:
    """Surface molar flux (mol m^-2 s^-1) driven by cell current ``current``."""
    e = params.electrode(side)
    j = current * e.radius / (3.0 * e.vol * e.eps * params.faraday)
    return -j if side == "pos" else j


def exchange_current(c_surf: float, electrode: ElectrodeParams, params: SpmParams) -> float:
    prod = max((electrode.c_max - c_surf) * c_surf, 0.0)
    return electrode.k * params.faraday * math.sqrt(prod * params.c_el)


def butler_volmer_flux(eta: float, c_surf: float, electrode: ElectrodeParams, params: SpmParams) -> float:
    """Reaction flux for activation overpotential ``eta``: 2 j0 sinh(F eta / 2RT)."""
    return 2.0 * exchange_current(c_surf, electrode, params) * math.sinh(eta / params.thermal_voltage2)


def overpotential(flux: float, c_surf: float, electrode: ElectrodeParams, params: SpmParams) -> float:
    """Activation overpotential that carries ``flux``; closed-form inverse of Butler-Volmer."""
    if not 0.0 < c_surf < electrode.c_max:
        if flux == 0:
            return 0.0
        raise SaturationError(
            f"surface concentration {c_surf:.6g} mol/m^3 outside (0, {electrode.c_max:.6g}); "
            "electrode saturated")
    j0 = exchange_current(c_surf, electrode, params)
    return params.thermal_voltage2 * math.asinh(flux / (2.0 * j0))


def _clip_surface(c_surf: float, electrode: ElectrodeParams) -> tuple[float, bool]:
    lo = SOFT_CLIP * electrode.c_max
    hi = (1.0 - SOFT_CLIP) * electrode.c_max
    if c_surf < lo:
        return lo, True
    if c_surf > hi:
        return hi, True
    return c_surf, False


def _phi(flux, c_surf, electrode, params, electrode_current, z, strict) -> float:
    """Solid-phase potential: eta + OCP(c_surf/c_max) + I_e * Z."""
    if not strict:
        c_surf, _ = _clip_surface(c_surf, electrode)
    eta = overpotential(flux, c_surf, electrode, params)
    return eta + electrode.ocp(c_surf / electrode.c_max) + electrode_current * z


def _z_neg(params: SpmParams, thickness: float, degrade: bool) -> float:
    if degrade:
        return film_resistance(thickness, params.neg, params.sei)
    return params.neg.z0


def _require_sei(params: SpmParams) -> SeiParams:
    if params.sei is None:
        raise ValidationError("degradation requested but the parameter set has no SEI block")
    return params.sei


def _split(state: SpmState, current: float, j_neg: float, params: SpmParams,
           degrade: bool, strict: bool) -> tuple[float, float, float]:
    """(J_intercalation, J_sei, eta_sei) for the negative electrode at ``state``."""
    if not degrade or current >= 0:
        return j_neg, 0.0, math.nan
    sei = _require_sei(params)
    neg = params.neg
    z_n = _z_neg(params, state.sei_thickness, True)
    def phi_of_flux(j_li):
        cs = surface_concentration(state.conc_neg, j_li, neg)
        return _phi(j_li, cs, neg, params, current, z_n, strict)

    return sei_split(phi_of_flux(j_neg), j_neg, z_n, current, sei, params, phi_of_flux)


def terminal_voltage(state: SpmState, current: float, params: SpmParams, degrade: bool = False) -> float:
    """Cell voltage phi_pos - phi_neg at ``state`` while carrying ``current``."""
    j_pos = flux_from_current(current, "pos", params)
    j_neg = flux_from_current(current, "neg", params)
    j_li, _, _ = _split(state, current, j_neg, params, degrade, strict=True)
    cs_p = surface_concentration(state.conc_pos, j_pos, params.pos)
    cs_n = surface_concentration(state.conc_neg, j_li, params.neg)
    z_n = _z_neg(params, state.sei_thickness, degrade)
    phi_p = _phi(j_pos, cs_p, params.pos, params, -current, params.pos.z0, True)
    phi_n = _phi(j_li, cs_n, params.neg, params, current, z_n, True)
    return phi_p - phi_n


# --------------------------------------------------------------------------
# stepping


@dataclass(frozen=True)
class SpmTape:
    """Intermediate values of one step, kept for sensitivities and diagnostics."""

    current: float
    j_pos: float
    j_neg: float
    j_li: float
    j_sei: float
    eta_sei: float
    conc_pos: np.ndarray  # after the step
    conc_neg: np.ndarray
    cs_pos: float  # surface concentrations after the step (unclipped)
    cs_neg: float
    clip_pos: bool
    clip_neg: bool
    voltage: float
    z_neg: float


def spm_advance(state: SpmState, current: float, params: SpmParams, tau: float,
                degrade: bool = False, strict: bool = True) -> tuple[SpmState, SpmTape]:
    """One step of the particle model.

    ``strict`` raises on every envelope violation (current, concentration
    window, voltage, saturation). The unchecked mode never raises on the
    envelope and clips surface stoichiometry into (0, 1) for the kinetics;
    it is what the penalty-based optimiser differentiates.
    """
    if strict:
        check_current(current, params.i_max_ch, params.i_max_dis)
    if degrade:
        _require_sei(params)
    j_pos = flux_from_current(current, "pos", params)
    j_neg = flux_from_current(current, "neg", params)
    j_li, j_sei, eta_sei = _split(state, current, j_neg, params, degrade, strict)

    op_p = diffusion_operator(params.pos, params.n_shells, tau, params.scheme)
    op_n = diffusion_operator(params.neg, params.n_shells, tau, params.scheme)
    c_pos = op_p.advance(state.conc_pos, j_pos)
    c_neg = op_n.advance(state.conc_neg, j_li)

    thickness, li_loss = state.sei_thickness, state.li_loss
    if j_sei != 0.0:
        ledger = sei_update(DegradationLedger(li_loss=li_loss, sei_thickness=thickness),
                            j_sei, params.neg, params.sei, tau)
        thickness, li_loss = ledger.sei_thickness, ledger.li_loss

    cs_p = op_p.surface(c_pos, j_pos)
    cs_n = op_n.surface(c_neg, j_li)
    if strict:
        _check_window(c_pos, cs_p, params.pos, "pos")
        _check_window(c_neg, cs_n, params.neg, "neg")
    z_n = _z_neg(params, thickness, degrade)
    cp_eff, clip_p = (cs_p, False) if strict else _clip_surface(cs_p, params.pos)
    cn_eff, clip_n = (cs_n, False) if strict else _clip_surface(cs_n, params.neg)
    phi_p = _phi(j_pos, cp_eff, params.pos, params, -current, params.pos.z0, strict)
    phi_n = _phi(j_li, cn_eff, params.neg, params, current, z_n, strict)
    volts = phi_p - phi_n
    if strict:
        check_voltage(volts, params.v_min, params.v_max)
    new = SpmState(c_pos, c_neg, thickness, li_loss)
    tape = SpmTape(current, j_pos, j_neg, j_li, j_sei, eta_sei, c_pos, c_neg,
                   cs_p, cs_n, clip_p, clip_n, volts, z_n)
    return new, tape


def _check_window(conc: np.ndarray, c_surf: float, e: ElectrodeParams, side: str) -> None:
    lo = min(float(conc.min()), c_surf)
    hi = max(float(conc.max()), c_surf)
    tol = FEAS_RTOL * e.c_max
    if lo < e.c_min_op - tol:
        raise InfeasibleStepError(f"c_{side}_min", e.c_min_op - lo,
                                  f"{side} concentration {lo:.6g} mol/m^3 below {e.c_min_op:.6g}")
    if hi > e.c_max_op + tol:
        raise InfeasibleStepError(f"c_{side}_max", hi - e.c_max_op,
                                  f"{side} concentration {hi:.6g} mol/m^3 above {e.c_max_op:.6g}")


def spm_step(state: SpmState, current: float, params: SpmParams, tau: float,
             degrade: bool = False) -> tuple[SpmState, float, float]:
    """Checked step; returns ``(state', V, P)`` with P = N I V in W."""
    new, tape = spm_advance(state, current, params, tau, degrade, strict=True)
    return new, tape.voltage, params.n_cells * current * tape.voltage


def spm_soc(state: SpmState, params: SpmParams) -> float:
    """State of charge in Ah from the negative-electrode surface concentration."""
    neg = params.neg
    c_surf = float(state.conc_neg[-1])
    return params.q_rated * (c_surf - neg.c_min_op) / (neg.c_max_op - neg.c_min_op)


def spm_initial_state(params: SpmParams, soc_fraction: float) -> SpmState:
    """Uniform profiles at a given fraction of both operating windows."""
    if not 0.0 <= soc_fraction <= 1.0:
        raise ValidationError("soc_fraction must lie in [0, 1]")
    n, p = params.neg, params.pos
    c_n = n.c_min_op + soc_fraction * (n.c_max_op - n.c_min_op)
    c_p = p.c_max_op - soc_fraction * (p.c_max_op - p.c_min_op)
    return SpmState(np.full(params.n_shells, c_p), np.full(params.n_shells, c_n))


def spm_ledger(state: SpmState, params: SpmParams) -> DegradationLedger:
    z_n = film_resistance(state.sei_thickness, params.neg, params.sei) if params.sei else params.neg.z0
    return DegradationLedger(
        capacity_loss=state.li_loss / cyclable_lithium(params.neg),
        li_loss=state.li_loss,
        sei_thickness=state.sei_thickness,
        z_n=z_n,
    )


def total_lithium(state: SpmState, params: SpmParams) -> float:
    """Moles of lithium held in both electrodes' active material."""
    out = 0.0
    for e, conc in ((params.pos, state.conc_pos), (params.neg, state.conc_neg)):
        op = diffusion_operator(e, len(conc), 1.0, "implicit")
        out += op.mean(conc) * e.eps * e.vol
    return out


class SpmModel:
    """Single-particle simulator; controls are cell currents in A."""

    name = "spm"
    schedule_type = CurrentSchedule

    def __init__(self, params: SpmParams, init: SpmState, degrade: bool = False):
        if len(init.conc_pos) != params.n_shells or len(init.conc_neg) != params.n_shells:
            raise ValidationError("initial profiles must have n_shells entries")
        if degrade:
            _require_sei(params)
        self.params = params
        self.init = init
        self.degrade = degrade

    @property
    def n_cells(self) -> int:
        return self.params.n_cells

    def _loss_fraction(self, state: SpmState) -> float:
        return state.li_loss / cyclable_lithium(self.params.neg)

    def initial_record(self) -> StepRecord:
        return StepRecord(
            state=self.init,
            soc_fraction=spm_soc(self.init, self.params) / self.params.q_rated,
            voltage=terminal_voltage(self.init, 0.0, self.params),
            current=0.0,
            cell_power_w=0.0,
            capacity_loss=self._loss_fraction(self.init),
        )

    def record(self, state: SpmState, current: float, volts: float, tau: float) -> StepRecord:
        cell_w = current * volts
        pack_mw = self.params.n_cells * cell_w / 1e6
        return StepRecord(
            state=state,
            soc_fraction=spm_soc(state, self.params) / self.params.q_rated,
            voltage=volts,
            current=current,
            cell_power_w=cell_w,
            pack_power_mw=pack_mw,
            throughput_mwh=abs(pack_mw) * tau / 3600.0,
            capacity_loss=self._loss_fraction(state),
        )

    def step(self, state: SpmState, u: float, tau: float) -> StepRecord:
        current = float(u)
        new, tape = spm_advance(state, current, self.params, tau, self.degrade, strict=True)
        return self.record(new, current, tape.voltage, tau)

    def soft_step(self, state: SpmState, current: float, tau: float) -> StepRecord:
        new, tape = spm_advance(state, float(current), self.params, tau, self.degrade, strict=False)
        return self.record(new, float(current), tape.voltage, tau)

    def current_bounds(self) -> tuple[float, float]:
        return -self.params.i_max_ch, self.params.i_max_dis

    def controls_of(self, schedule: CurrentSchedule) -> list[float]:
        if not isinstance(schedule, CurrentSchedule):
            raise ValidationError("the particle model runs current schedules")
        return schedule.controls

    def schedule_from_controls(self, grid: TimeGrid, controls: Sequence[float]) -> CurrentSchedule:
        return CurrentSchedule(grid, [float(u) for u in controls])

    def simulate(self, schedule: CurrentSchedule) -> Trace:
        return run_controls(self, schedule.grid, self.controls_of(schedule))


def spm_simulate(schedule: CurrentSchedule, init: SpmState, params: SpmParams,
                 degrade: bool = False) -> Trace:
    return SpmModel(params, init, degrade).simulate(schedule)
