import math
from dataclasses import replace
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, strategies as st

from battsched.core import (
    ConfigurationError,
    CurrentSchedule,
    InfeasibleStepError,
    SaturationError,
    StepSizeError,
    TimeGrid,
    ValidationError,
)
from battsched.spm import (
    ElectrodeParams,
    OcpCurve,
    ShellDiffusion,
    SpmModel,
    SpmState,
    butler_volmer_flux,
    diffuse_step,
    exchange_current,
    flux_from_current,
    overpotential,
    spm_advance,
    spm_initial_state,
    spm_simulate,
    spm_soc,
    spm_step,
    surface_concentration,
    surface_weights,
    terminal_voltage,
    total_lithium,
)

T0 = datetime(2024, 7, 1)


@pytest.fixture(scope="module")
def sp(demo_params):
    return demo_params.spm


def _linear_ocp(v0, v1):
    return OcpCurve((0.0, 0.5, 1.0), (v0, 0.5 * (v0 + v1), v1))


class TestFlux:
    def test_zero_current(self, sp):
        assert flux_from_current(0.0, "pos", sp) == 0.0 and flux_from_current(0.0, "neg", sp) == 0.0

    def test_linear_and_opposite(self, sp):
        for side in ("pos", "neg"):
            assert flux_from_current(2.0, side, sp) == pytest.approx(2 * flux_from_current(1.0, side, sp), rel=1e-15)
        assert flux_from_current(1.0, "pos", sp) < 0 < flux_from_current(1.0, "neg", sp)

    def test_worked_value(self, sp):
        neg = replace(sp.neg, radius=5e-6, vol=1e-5, eps=0.5)
        p = replace(sp, neg=neg, faraday=96485.0)
        # oracle: 5e-6 / (3 * 1e-5 * 0.5 * 96485) evaluated separately
        assert flux_from_current(1.0, "neg", p) == pytest.approx(3.4547684441450313e-06, rel=1e-14)

    def test_bad_side(self, sp):
        with pytest.raises(ValidationError):
            flux_from_current(1.0, "mid", sp)


class TestOverpotential:
    def test_zero_flux(self, sp):
        assert overpotential(0.0, 0.5 * sp.neg.c_max, sp.neg, sp) == 0.0

    def test_unit_ratio(self, sp):
        cs = 0.4 * sp.neg.c_max
        j0 = exchange_current(cs, sp.neg, sp)
        p = replace(sp, temp=298.15, gas_const=8.314, faraday=96485.0)
        # oracle: 2 * 8.314 * 298.15 / 96485 * asinh(1), evaluated separately
        assert overpotential(2 * j0, cs, sp.neg, p) == pytest.approx(0.04528715721074893, rel=1e-13)
        assert overpotential(2 * j0, cs, sp.neg, p) == pytest.approx(0.0453, abs=5e-5)

    def test_saturation(self, sp):
        with pytest.raises(SaturationError):
            overpotential(1e-6, sp.neg.c_max, sp.neg, sp)
        with pytest.raises(SaturationError):
            overpotential(-1e-6, 0.0, sp.neg, sp)
        assert overpotential(0.0, sp.neg.c_max, sp.neg, sp) == 0.0

    @given(st.floats(1e-4, 1 - 1e-4), st.floats(-1e3, 1e3))
    def test_inversion_round_trip(self, sp, frac, ratio):
        cs = frac * sp.pos.c_max
        j = ratio * 2 * exchange_current(cs, sp.pos, sp)
        eta = overpotential(j, cs, sp.pos, sp)
        assert butler_volmer_flux(eta, cs, sp.pos, sp) == pytest.approx(j, rel=1e-12, abs=1e-300)


class TestDiffusion:
    def test_zero_flux_uniform_unchanged(self, sp):
        c = np.full(sp.n_shells, 12345.0)
        out = diffuse_step(c, 0.0, sp.neg, 600.0)
        assert np.allclose(out, c, rtol=1e-14)

    def test_zero_flux_conserves(self, sp):
        rng = np.random.default_rng(0)
        c = rng.uniform(2000, 25000, sp.n_shells)
        op = ShellDiffusion(sp.neg.radius, sp.neg.diff, sp.n_shells, 600.0)
        out = diffuse_step(c, 0.0, sp.neg, 600.0)
        assert op.mean(out) == pytest.approx(op.mean(c), rel=1e-14)
        assert out.max() < c.max() and out.min() > c.min()  # smoothing

    def test_mean_moves_by_mass_balance(self, sp):
        op = ShellDiffusion(sp.pos.radius, sp.pos.diff, 12, 100.0)
        c = np.full(12, 30000.0)
        for _ in range(20):
            nxt = op.advance(c, -3e-6)
            assert op.mean(nxt) - op.mean(c) == pytest.approx(3 * 3e-6 * 100.0 / sp.pos.radius, rel=1e-11)
            c = nxt

    def test_near_steady_surface_offset(self, sp):
        # derived: parabolic limit -J R / (5 D), checked against a 10x finer grid at 1 %
        e = sp.neg
        flux = 1e-6
        t_end = 3 * e.radius ** 2 / e.diff

        def offset(n):
            op = ShellDiffusion(e.radius, e.diff, n, t_end / 400)
            c = np.full(n, 15000.0)
            for _ in range(400):
                c = op.advance(c, flux)
            return op.surface(c, flux) - op.mean(c)

        coarse, fine = offset(10), offset(100)
        formula = -flux * e.radius / (5 * e.diff)
        assert coarse == pytest.approx(fine, rel=0.01)
        assert fine == pytest.approx(formula, rel=0.01)

    def test_explicit_matches_implicit_for_small_steps(self, sp):
        # both schemes are first order in time, so their gap halves with the step
        e = sp.neg
        c0 = np.linspace(10000, 20000, 10)

        def gap(tau, steps):
            imp = ShellDiffusion(e.radius, e.diff, 10, tau)
            exp = ShellDiffusion(e.radius, e.diff, 10, tau, scheme="explicit")
            a, b = c0.copy(), c0.copy()
            for _ in range(steps):
                a, b = imp.advance(a, 1e-6), exp.advance(b, 1e-6)
            assert imp.mean(a) == pytest.approx(exp.mean(b), rel=1e-12)
            return np.max(np.abs(a - b) / b)

        g1, g2 = gap(0.05, 200), gap(0.025, 400)
        assert g1 < 1e-3
        assert g1 / g2 == pytest.approx(2.0, rel=0.05)

    def test_explicit_stability_guard(self, sp):
        with pytest.raises(ConfigurationError):
            ShellDiffusion(sp.neg.radius, sp.neg.diff, 10, 600.0, scheme="explicit")

    def test_negative_concentration_is_step_size_error(self, sp):
        with pytest.raises(StepSizeError):
            diffuse_step(np.full(10, 100.0), 1e-4, sp.neg, 3600.0)

    def test_surface_uniform_profile(self, sp):
        w_last, w_prev, g = surface_weights(sp.neg.radius, sp.neg.diff, 10)
        assert w_last + w_prev == pytest.approx(1.0, rel=1e-14)
        c = np.full(10, 1000.0)
        assert surface_concentration(c, 2e-6, sp.neg) == pytest.approx(1000.0 + g * 2e-6, rel=1e-14)

    def test_surface_exact_for_parabolic_profile(self, sp):
        # c(r) = a + b r^2 has slope 2 b R at the surface, so J = -2 b R D
        e, n = sp.neg, 10
        a, b = 12000.0, -3e13
        edges = np.linspace(0.0, e.radius, n + 1)
        r1, r2 = edges[:-1], edges[1:]
        avg = a + b * 0.6 * (r2 ** 5 - r1 ** 5) / (r2 ** 3 - r1 ** 3)
        flux = -2 * b * e.radius * e.diff
        assert surface_concentration(avg, flux, e) == pytest.approx(a + b * e.radius ** 2, rel=1e-12)


class TestTerminalVoltage:
    def test_rest_is_ocp_difference(self, sp):
        s = spm_initial_state(sp, 0.37)
        cp, cn = s.conc_pos[-1] / sp.pos.c_max, s.conc_neg[-1] / sp.neg.c_max
        assert terminal_voltage(s, 0.0, sp) == sp.pos.ocp(cp) - sp.neg.ocp(cn)

    def test_discharge_below_rest(self, sp):
        s = spm_initial_state(sp, 0.6)
        rest = terminal_voltage(s, 0.0, sp)
        for i in (0.01, 1.0, 5.0):
            assert terminal_voltage(s, i, sp) < rest

    def test_worked_composition(self, sp):
        # OCP_pos = 4.0 V and OCP_neg = 0.1 V at half stoichiometry; rate constants chosen so
        # eta_pos = -0.02 V and eta_neg = +0.02 V at 1 A; no film resistance
        current = 1.0
        v2 = sp.thermal_voltage2

        def electrode(e, ocp, side):
            e = replace(e, diff=1.0, z0=0.0, ocp=ocp, c_min_op=1.0, c_max_op=e.c_max)
            flux = abs(flux_from_current(current, side, replace(sp, **{side: e})))
            cs = 0.5 * e.c_max
            k = flux / (2 * math.sinh(0.02 / v2)) / (sp.faraday * math.sqrt(cs * cs * sp.c_el))
            return replace(e, k=k)

        pos = electrode(sp.pos, _linear_ocp(4.2, 3.8), "pos")
        neg = electrode(sp.neg, _linear_ocp(0.2, 0.0), "neg")
        p = replace(sp, pos=pos, neg=neg)
        s = SpmState(np.full(p.n_shells, 0.5 * pos.c_max), np.full(p.n_shells, 0.5 * neg.c_max))
        assert terminal_voltage(s, current, p) == pytest.approx(3.86, abs=1e-9)

    @given(st.floats(0.05, 0.95))
    def test_strictly_decreasing_in_current(self, sp, frac):
        s = spm_initial_state(sp, frac)
        v = [terminal_voltage(s, float(i), sp) for i in np.linspace(-10, 10, 41)]
        assert np.all(np.diff(v) < 0)


class TestStep:
    def test_rest_keeps_uniform_state(self, sp):
        s = spm_initial_state(sp, 0.5)
        s2, v, p = spm_step(s, 0.0, sp, 3600.0)
        assert np.allclose(s2.conc_pos, s.conc_pos, rtol=1e-14) and np.allclose(s2.conc_neg, s.conc_neg, rtol=1e-14)
        assert v == pytest.approx(terminal_voltage(s, 0.0, sp), abs=1e-12) and p == 0.0

    def test_window_hit_at_mass_balance_step(self, sp):
        # derived step count: the negative surface sits J R/(5D) below the mean, and the mean
        # falls 3 J tau / R per step; start 10.5 steps plus that offset above c_min_op
        tau, current = 600.0, 1.0
        j = flux_from_current(current, "neg", sp)
        per_step = 3 * j * tau / sp.neg.radius
        offset = j * sp.neg.radius / (5 * sp.neg.diff)
        c0 = sp.neg.c_min_op + 10.5 * per_step + offset
        c_pos = 0.5 * (sp.pos.c_min_op + sp.pos.c_max_op)
        s = SpmState(np.full(sp.n_shells, c_pos), np.full(sp.n_shells, c0))
        with pytest.raises(InfeasibleStepError) as exc:
            spm_simulate(CurrentSchedule(TimeGrid(T0, tau, 20), np.full(20, current)), s, sp)
        assert exc.value.kind == "c_neg_min"
        assert exc.value.step == 10

    def test_symmetric_cycle_returns_means(self, sp):
        s0 = spm_initial_state(sp, 0.5)
        model = SpmModel(sp, s0)
        grid = TimeGrid(T0, 300.0, 16)
        u = [-0.5] * 4 + [0.0] * 4 + [0.5] * 4 + [0.0] * 4
        end = model.simulate(CurrentSchedule(grid, u)).final_state
        op_p = ShellDiffusion(sp.pos.radius, sp.pos.diff, sp.n_shells, 1.0)
        op_n = ShellDiffusion(sp.neg.radius, sp.neg.diff, sp.n_shells, 1.0)
        assert op_p.mean(end.conc_pos) == pytest.approx(op_p.mean(s0.conc_pos), rel=1e-9)
        assert op_n.mean(end.conc_neg) == pytest.approx(op_n.mean(s0.conc_neg), rel=1e-9)

    def test_current_bound(self, sp):
        with pytest.raises(InfeasibleStepError) as exc:
            spm_step(spm_initial_state(sp, 0.5), 11.0, sp, 60.0)
        assert exc.value.kind == "i_max_dis"

    def test_voltage_bound(self, sp):
        p = replace(sp, v_min=3.7)
        with pytest.raises(InfeasibleStepError) as exc:
            spm_step(spm_initial_state(sp, 0.5), 8.0, p, 60.0)
        assert exc.value.kind == "v_min"

    def test_soft_mode_never_raises(self, sp):
        s = spm_initial_state(sp, 0.05)
        for _ in range(5):
            s, tape = spm_advance(s, 10.0, sp, 3600.0, strict=False)
            assert math.isfinite(tape.voltage)

    def test_degrade_needs_sei_block(self, sp):
        with pytest.raises(ValidationError):
            SpmModel(replace(sp, sei=None), spm_initial_state(sp, 0.5), degrade=True)


class TestSoc:
    def test_edges_and_midpoint(self, sp):
        n = sp.neg

        def at(c):
            return spm_soc(SpmState(np.full(sp.n_shells, 30000.0), np.full(sp.n_shells, c)), sp)

        assert at(n.c_min_op) == 0.0
        assert at(n.c_max_op) == pytest.approx(sp.q_rated, rel=1e-15)
        assert at(0.5 * (n.c_min_op + n.c_max_op)) == pytest.approx(sp.q_rated / 2, rel=1e-15)

    def test_initial_state_fraction(self, sp):
        assert spm_soc(spm_initial_state(sp, 0.3), sp) == pytest.approx(0.3 * sp.q_rated, rel=1e-12)
        with pytest.raises(ValidationError):
            spm_initial_state(sp, 1.5)

    @given(st.lists(st.floats(0.01, 3.0), min_size=1, max_size=12), st.floats(60.0, 1800.0))
    def test_monotone_under_charge_with_nondecreasing_magnitude(self, sp, mags, tau):
        s = spm_initial_state(sp, 0.1)
        soc = [spm_soc(s, sp)]
        for m in sorted(mags):
            s, _ = spm_advance(s, -m, sp, tau, strict=False)
            soc.append(spm_soc(s, sp))
        assert all(b >= a for a, b in zip(soc, soc[1:]))


@given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=20), st.floats(10.0, 3600.0))
def test_lithium_conserved_between_electrodes(demo_params, currents, tau):
    """The lithium leaving one electrode enters the other, so the total is fixed."""
    sp = demo_params.spm
    s = spm_initial_state(sp, 0.5)
    li0 = total_lithium(s, sp)
    for i in currents:
        s, _ = spm_advance(s, i, sp, tau, strict=False)
    assert total_lithium(s, sp) == pytest.approx(li0, rel=1e-12)


@given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=20), st.floats(10.0, 3600.0))
def test_each_electrode_mean_follows_coulomb_count(demo_params, currents, tau):
    sp = demo_params.spm
    s = spm_initial_state(sp, 0.5)
    op = ShellDiffusion(sp.neg.radius, sp.neg.diff, sp.n_shells, 1.0)
    m0 = op.mean(s.conc_neg)
    for i in currents:
        s, _ = spm_advance(s, i, sp, tau, strict=False)
    moved = sum(-3 * flux_from_current(i, "neg", sp) * tau / sp.neg.radius for i in currents)
    assert op.mean(s.conc_neg) - m0 == pytest.approx(moved, rel=1e-9, abs=1e-9 * sp.neg.c_max)


def test_electrode_validation(sp):
    with pytest.raises(ValidationError):
        replace(sp.neg, c_min_op=30000.0)
    with pytest.raises(ValidationError):
        replace(sp.neg, diff=0.0)
    with pytest.raises(ValidationError):
        OcpCurve((0.0, 0.5, 1.0), (1.0, 0.5, 0.7))
    with pytest.raises(ValidationError):
        replace(sp, n_shells=2)
    assert isinstance(sp.neg, ElectrodeParams)


def test_ocp_interpolates_breakpoints_and_slope(sp):
    ocp = sp.pos.ocp
    for x, v in ocp.pairs():
        assert ocp(x) == pytest.approx(v, abs=1e-12)
    h = 1e-7
    for x in (0.13, 0.5, 0.77):
        assert ocp.slope(x) == pytest.approx((ocp(x + h) - ocp(x - h)) / (2 * h), rel=1e-5)
