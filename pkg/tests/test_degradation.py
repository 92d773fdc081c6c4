import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from battsched.core import NumericalError, ValidationError
from battsched.degradation import (
    DegradationLedger,
    SeiParams,
    StressFunction,
    ThroughputModel,
    cycle_fade,
    cyclable_lithium,
    degradation_cost,
    film_resistance,
    particle_surface_area,
    rainflow_cycles,
    reversals,
    sei_split,
    sei_update,
    throughput_fade,
)
from oracles import reference_rainflow, reference_reversals, split_cycles


class TestThroughput:
    def test_linear_before_end_of_life(self):
        loss, eol = throughput_fade(2500.0, ThroughputModel(10000.0))
        assert loss == pytest.approx(0.05, rel=1e-15) and not eol

    def test_clamped_at_end_of_life(self):
        loss, eol = throughput_fade(12000.0, ThroughputModel(10000.0, 0.3))
        assert loss == 0.3 and eol

    def test_zero_throughput(self):
        assert throughput_fade(0.0, ThroughputModel(1.0)) == (0.0, False)

    def test_validation(self):
        with pytest.raises(ValidationError):
            ThroughputModel(0.0)
        with pytest.raises(ValidationError):
            ThroughputModel(10.0, 1.0)


class TestRainflow:
    def test_reversals_drop_interior_and_repeats(self):
        assert reversals([0, 1, 2, 2, 1, 3, 3, 0]) == [0, 2, 1, 3, 0]

    def test_single_excursion_is_two_halves(self):
        # 0 -> 1 -> 0 closes nothing under the four-point rule: two halves, one full cycle of damage
        assert rainflow_cycles([0.0, 1.0, 0.0]) == [(1.0, 0.5), (1.0, 0.5)]

    def test_inner_cycle_closes(self):
        cyc = rainflow_cycles([0.0, 1.0, 0.4, 0.8, 0.0])
        assert split_cycles(cyc) == ([pytest.approx(0.4)], [1.0, 1.0])

    def test_monotone_profile_is_one_half(self):
        assert rainflow_cycles([0.1, 0.2, 0.5, 0.9]) == [(pytest.approx(0.8), 0.5)]

    def test_flat_profile_has_no_cycles(self):
        assert rainflow_cycles([0.5, 0.5, 0.5]) == []

    def test_too_short(self):
        with pytest.raises(ValidationError):
            rainflow_cycles([0.3])


profiles = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=2, max_size=60)


@given(profiles)
def test_reversals_match_reference(p):
    assert reversals(p) == reference_reversals(p)


@given(profiles)
def test_rainflow_matches_reference(p):
    full, halves = split_cycles(rainflow_cycles(p))
    ref_full, ref_halves = reference_rainflow(p)
    assert np.allclose(full, ref_full, rtol=0, atol=1e-12)
    assert np.allclose(halves, ref_halves, rtol=0, atol=1e-12)


# values on a 1e-6 grid: scaling can neither underflow nor merge distinct points
grid_profiles = st.lists(st.integers(0, 10 ** 6).map(lambda k: k * 1e-6), min_size=2, max_size=60)


@given(grid_profiles, st.floats(0.1, 10.0))
def test_rainflow_scales_with_profile(p, alpha):
    base = rainflow_cycles(p)
    scaled = rainflow_cycles([alpha * x for x in p])
    assert len(base) == len(scaled)
    for (d0, w0), (d1, w1) in zip(base, scaled):
        assert w0 == w1 and d1 == pytest.approx(alpha * d0, rel=1e-12, abs=1e-15)


@given(profiles)
def test_collinear_points_do_not_change_count(p):
    dense = [p[0]]
    for a, b in zip(p, p[1:]):
        dense.extend([a + 0.5 * (b - a), b])
    assert split_cycles(rainflow_cycles(dense)) == pytest.approx(split_cycles(rainflow_cycles(p)))


@given(profiles)
def test_depths_bounded_by_range(p):
    span = max(p) - min(p)
    assert all(0 < d <= span + 1e-15 for d, _ in rainflow_cycles(p))


class TestStress:
    def test_value(self):
        # frozen from a 30-digit evaluation of 5.24e-4 * 0.5**2.03
        assert StressFunction()(0.5) == pytest.approx(1.28304058983887e-4, rel=1e-13)

    def test_zero_depth_zero_cost(self):
        assert StressFunction()(0.0) == 0.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            StressFunction(b=0.9)
        with pytest.raises(ValidationError):
            StressFunction(a=-1.0)

    def test_cycle_fade_weights_halves(self):
        s = StressFunction(a=1.0, b=2.0)
        assert cycle_fade([(0.5, 1.0), (0.4, 0.5)], s) == pytest.approx(0.25 + 0.08, rel=1e-15)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(1.0, 3.0))
def test_stress_is_convex(x, y, t, b):
    s = StressFunction(a=1.0, b=b)
    mid = s(t * x + (1 - t) * y)
    assert mid <= t * s(x) + (1 - t) * s(y) + 1e-12


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_splitting_a_cycle_never_costs_more(d1, d2):
    # superadditivity of a convex power law through zero
    assume(d1 + d2 <= 1.0)
    s = StressFunction()
    assert s(d1) + s(d2) <= s(d1 + d2) + 1e-15


class TestCost:
    def test_full_life_costs_one_replacement(self):
        assert degradation_cost(0.2, 150000.0) == pytest.approx(150000.0, rel=1e-15)

    def test_linear(self):
        assert degradation_cost(0.01, 1000.0, 0.25) == pytest.approx(40.0, rel=1e-15)

    def test_negative_loss_rejected(self):
        with pytest.raises(ValidationError):
            degradation_cost(-1e-3, 1.0)


@pytest.fixture
def spm(demo_params):
    return demo_params.spm


class TestSeiSplit:
    def test_no_side_reaction_when_discharging(self, spm):
        assert sei_split(0.1, 3e-6, 0.004, 2.0, spm.sei, spm) == (3e-6, 0.0, pytest.approx(0.1 - 0.4 - 0.008))

    def test_fixed_potential_value(self, spm):
        # frozen from a 30-digit evaluation: eta = -0.292 V, J = -(j0/F) exp(-F eta / 2RT)
        j_int, j_sei, eta = sei_split(0.1, -3e-6, 0.004, -2.0, spm.sei, spm)
        assert eta == pytest.approx(-0.292, rel=1e-14)
        assert j_sei == pytest.approx(-3.04494785404850e-12, rel=1e-12)
        assert j_int + j_sei == pytest.approx(-3e-6, rel=1e-15)

    def test_fixed_point_is_consistent(self, spm):
        phi = lambda j: 0.1 + 1e3 * j  # noqa: E731
        j_int, j_sei, eta = sei_split(0.1, -3e-6, 0.004, -2.0, spm.sei, spm, phi_of_flux=phi)
        assert eta == pytest.approx(phi(j_int) - 0.4 + 2.0 * 0.004, rel=1e-14)
        beta = spm.faraday / (2 * spm.gas_const * spm.temp)
        assert j_sei == pytest.approx(-(1e-9 / spm.faraday) * math.exp(-beta * eta), rel=1e-12)

    def test_non_convergence_raises(self, spm):
        # a map that keeps jumping never settles
        flip = iter(np.tile([0.0, -0.5], 100))
        with pytest.raises(NumericalError):
            sei_split(0.1, -3e-6, 0.004, -2.0, spm.sei, spm, phi_of_flux=lambda j: next(flip), max_iter=10)


@given(st.floats(-0.2, 0.3), st.floats(-0.2, 0.3))
def test_side_flux_grows_as_overpotential_falls(phi_a, phi_b):
    from battsched.params import default_params

    spm = default_params().spm
    lo, hi = sorted((phi_a, phi_b))
    _, j_lo, _ = sei_split(lo, -1e-6, 0.004, -1.0, spm.sei, spm)
    _, j_hi, _ = sei_split(hi, -1e-6, 0.004, -1.0, spm.sei, spm)
    assert j_lo <= j_hi <= 0.0


class TestSeiUpdate:
    def test_zero_flux_leaves_ledger(self, spm):
        led = DegradationLedger(0.01, 1e-3, 2e-9, 0.0041)
        assert sei_update(led, 0.0, spm.neg, spm.sei, 600.0) is led

    def test_thickness_growth(self, spm):
        led = sei_update(DegradationLedger(), -1e-10, spm.neg, spm.sei, 1.0)
        assert led.sei_thickness == pytest.approx(9.585798816568047e-15, rel=1e-14)
        assert led.li_loss == pytest.approx(1e-10 * 4.5792, rel=1e-14)
        assert led.capacity_loss == pytest.approx(led.li_loss / 0.186556608, rel=1e-14)

    def test_positive_flux_rejected(self, spm):
        with pytest.raises(ValidationError):
            sei_update(DegradationLedger(), 1e-12, spm.neg, spm.sei, 1.0)

    def test_geometry(self, spm):
        assert particle_surface_area(spm.neg) == pytest.approx(4.5792, rel=1e-14)
        assert cyclable_lithium(spm.neg) == pytest.approx(0.186556608, rel=1e-14)

    def test_film_resistance_spread_over_area(self, spm):
        # 1e-8 m of film at 5e-6 S/m is 2e-3 ohm m^2, over 4.5792 m^2
        assert film_resistance(1e-8, spm.neg, spm.sei) == pytest.approx(0.00443675751222921, rel=1e-13)

    def test_params_validation(self):
        with pytest.raises(ValidationError):
            SeiParams(1e-9, 0.4, 0.162, 0.0, 5e-6, 0.004)
        with pytest.raises(ValidationError):
            SeiParams(-1e-9, 0.4, 0.162, 1690.0, 5e-6, 0.004)


@given(st.lists(st.floats(0.0, 1e-9), min_size=1, max_size=20), st.floats(1.0, 3600.0))
def test_ledger_is_monotone(fluxes, tau):
    from battsched.params import default_params

    spm = default_params().spm
    led = DegradationLedger(z_n=spm.sei.z0_n)
    for j in fluxes:
        nxt = sei_update(led, -j, spm.neg, spm.sei, tau)
        assert nxt.sei_thickness >= led.sei_thickness
        assert nxt.li_loss >= led.li_loss
        assert nxt.capacity_loss >= led.capacity_loss
        assert nxt.z_n >= led.z_n
        led = nxt
