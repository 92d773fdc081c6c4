"""Capacity-fade models and their conversion to money.

Three ways to count wear:

* energy throughput: fade grows linearly with energy cycled, reaching the
  end-of-life fraction after a fixed lifetime throughput;
* rainflow cycle counting over the state-of-energy profile, with each
  cycle charged a stress-function amount that depends on its depth;
* solid-electrolyte-interphase growth on the negative electrode, driven
  by a Tafel side reaction while charging (used with the single-particle
  model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .core import Trace, NumericalError, ValidationError

EOL_FRACTION = 0.20


@dataclass(frozen=True)
class ThroughputModel:
    lifetime_throughput: float  # MWh delivered before end of life
    eol_fraction: float = EOL_FRACTION

    def __post_init__(self):
        if not self.lifetime_throughput > 0:
            raise ValidationError("lifetime_throughput must be positive")
        if not 0.0 < self.eol_fraction < 1.0:
            raise ValidationError("eol_fraction must lie in (0, 1)")

    def loss_rate(self) -> float:
        """Capacity-loss fraction per MWh of throughput."""
        return self.eol_fraction / self.lifetime_throughput


def throughput_fade(trace: Trace | float, model: ThroughputModel) -> tuple[float, bool]:
    """Capacity-loss fraction from energy throughput.

    Accepts a trace (its final cumulative throughput is used) or a
    throughput in MWh. Returns ``(loss, eol_reached)``; the loss is clamped
    at the end-of-life fraction once the lifetime throughput is used up.
    """
    thr = float(trace.throughput_mwh[-1]) if isinstance(trace, Trace) else float(trace)
    loss = model.loss_rate() * thr
    reached = loss >= model.eol_fraction
    return (model.eol_fraction if reached else loss), reached


@dataclass(frozen=True)
class StressFunction:
    """Per-cycle capacity loss as a power of cycle depth: a * dod**b.

    b >= 1 keeps the function convex with zero value at zero depth.
    The defaults are synthetic.
    """

    a: float = 5.24e-4
    b: float = 2.03

    def __post_init__(self):
        if not self.a >= 0:
            raise ValidationError("stress coefficient a must be nonnegative")
        if not self.b >= 1:
            raise ValidationError("stress exponent b must be >= 1 for convexity")

    def __call__(self, dod):
        return self.a * np.power(dod, self.b)


def reversals(profile: Sequence[float]) -> list[float]:
    """Turning points of a profile, endpoints included.

    Repeated values and points inside a monotone run are dropped.
    """
    pts = [float(v) for v in profile]
    if not pts:
        return []
    out = [pts[0]]
    direction = 0
    for v in pts[1:]:
        if v == out[-1]:
            continue
        d = 1 if v > out[-1] else -1
        if d == direction:
            out[-1] = v
        else:
            out.append(v)
            direction = d
    return out


def rainflow_cycles(profile: Sequence[float]) -> list[tuple[float, float]]:
    """Four-point rainflow count of a state-of-energy profile.

    Returns ``(depth, weight)`` pairs: closed cycles with weight 1.0 in the
    order they close, then the residual as half-cycles with weight 0.5.
    """
    if len(profile) < 2:
        raise ValidationError("rainflow needs at least two points")
    stack: list[float] = []
    cycles: list[tuple[float, float]] = []
    for r in reversals(profile):
        stack.append(r)
        while len(stack) >= 4:
            a, b, c, d = stack[-4:]
            inner = abs(c - b)
            if inner <= abs(b - a) and inner <= abs(d - c):
                cycles.append((inner, 1.0))
                del stack[-3:-1]
            else:
                break
    cycles.extend((abs(b - a), 0.5) for a, b in zip(stack, stack[1:]))
    return cycles


def cycle_fade(cycles: Sequence[tuple[float, float]], stress: StressFunction) -> float:
    return float(sum(w * stress(d) for d, w in cycles))


def degradation_cost(loss: float, replacement_cost: float, eol_fraction: float = EOL_FRACTION) -> float:
    """Money value of a capacity loss: using up the end-of-life fraction
    costs one replacement."""
    if loss < 0:
        raise ValidationError("capacity loss must be nonnegative")
    return replacement_cost * loss / eol_fraction


# --------------------------------------------------------------------------
# SEI growth


@dataclass(frozen=True)
class SeiParams:
    j0_sei: float  # A/m^2
    ocp_sei: float  # V
    molar_mass: float  # kg/mol
    density: float  # kg/m^3
    conductivity: float  # S/m
    z0_n: float  # ohm

    def __post_init__(self):
        for name in ("molar_mass", "density", "conductivity"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"SEI {name} must be positive")
        if self.j0_sei < 0 or self.z0_n < 0:
            raise ValidationError("SEI j0_sei and z0_n must be nonnegative")


@dataclass(frozen=True)
class DegradationLedger:
    capacity_loss: float = 0.0  # fraction of begin-of-life cyclable lithium
    li_loss: float = 0.0  # mol
    sei_thickness: float = 0.0  # m
    z_n: float = 0.0  # ohm


def particle_surface_area(electrode) -> float:
    """Total active-particle surface area of an electrode, 3*eps*vol/R (m^2)."""
    return 3.0 * electrode.eps * electrode.vol / electrode.radius


def cyclable_lithium(electrode) -> float:
    """Lithium inventory of the electrode's operating window (mol)."""
    return (electrode.c_max_op - electrode.c_min_op) * electrode.eps * electrode.vol


def film_resistance(thickness: float, electrode, sei: SeiParams) -> float:
    """Negative-electrode film resistance in ohm.

    thickness/conductivity is an area-specific resistance (ohm m^2); it is
    spread over the total particle surface area.
    """
    return sei.z0_n + thickness / (sei.conductivity * particle_surface_area(electrode))


def sei_split(
    phi_n: float,
    j_total: float,
    z_n: float,
    i_n: float,
    sei: SeiParams,
    params,
    phi_of_flux: Callable[[float], float] | None = None,
    max_iter: int = 50,
) -> tuple[float, float, float]:
    """Split the negative-electrode flux into intercalation and side reaction.

    The side-reaction overpotential is phi_n - OCP_sei - I_n * Z_n and the
    side flux follows a cathodic Tafel law,
    ``J_sei = -(j0_sei/F) * exp(-F * eta_sei / (2RT))``, so it grows as the
    overpotential falls. The reaction only runs while charging (I_n < 0).

    ``phi_of_flux`` recomputes phi_n from a trial intercalation flux; when
    given, the split is iterated to a fixed point, otherwise ``phi_n`` is
    held fixed. Returns ``(J_intercalation, J_sei, eta_sei)``.
    """
    F = params.faraday
    beta = F / (2.0 * params.gas_const * params.temp)
    eta = phi_n - sei.ocp_sei - i_n * z_n
    if i_n >= 0 or sei.j0_sei == 0:
        return j_total, 0.0, eta

    def side_flux(eta_sei):
        return -(sei.j0_sei / F) * math.exp(-beta * eta_sei)

    j_sei = side_flux(eta)
    if phi_of_flux is None:
        return j_total - j_sei, j_sei, eta
    for _ in range(max_iter):
        eta = phi_of_flux(j_total - j_sei) - sei.ocp_sei - i_n * z_n
        nxt = side_flux(eta)
        if abs(nxt - j_sei) <= 1e-13 * abs(nxt) + 1e-300:
            return j_total - nxt, nxt, eta
        j_sei = nxt
    raise NumericalError(f"SEI flux split did not converge in {max_iter} iterations")


def sei_update(
    ledger: DegradationLedger,
    j_sei: float,
    electrode,
    sei: SeiParams,
    tau: float,
) -> DegradationLedger:
    """Grow the film by one step of side-reaction flux ``j_sei`` (<= 0)."""
    if j_sei > 0:
        raise ValidationError(f"side-reaction flux must be <= 0 (consumption), got {j_sei}")
    if j_sei == 0:
        return ledger
    thickness = ledger.sei_thickness - tau * j_sei * sei.molar_mass / sei.density
    li_loss = ledger.li_loss - tau * particle_surface_area(electrode) * j_sei
    return replace(
        ledger,
        sei_thickness=thickness,
        li_loss=li_loss,
        z_n=film_resistance(thickness, electrode, sei),
        capacity_loss=li_loss / cyclable_lithium(electrode),
    )
