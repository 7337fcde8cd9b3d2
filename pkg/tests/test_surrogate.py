"""
Tests for the lateral-force surrogate: slip range and branch selection,
correction-function evaluation, the corrected stress and force, and its
agreement with the base model when the corrections are switched off.
"""

import logging
import time

import numpy as np
import pytest

from terrasense.bekker import lateral_force_base, solve_sinkage_batch
from terrasense.coeffs import FactorFunction, GFunCoeffs, GFunSet
from terrasense.constants import SLIP_RANGES
from terrasense.errors import DomainError, MissingArtifactError
from terrasense.quadrature import gauss_arc_nodes, quadratic_arc_nodes
from terrasense.surrogate import (
    eval_g, g_values, hysteresis_gap, quadratic_integrate, select_branch, select_slip_range,
    slip_range_ids, surrogate_lateral_force, surrogate_lateral_force_batch,
    surrogate_lateral_shear,
)
from terrasense.terrain import (
    WheelState, contact_angles, lateral_shear_displacement, lateral_shear_stress,
    normal_stress, sinkage_profile,
)


def _base_stress(theta, wheel, cg, geom, terrain):
    sink = np.maximum(sinkage_profile(theta, cg, geom), 0.0)
    sigma = normal_stress(sink, cg.b_eff, terrain)
    j_y = lateral_shear_displacement(theta, wheel.s, wheel.beta, cg, geom)
    return np.sign(wheel.beta) * lateral_shear_stress(j_y, sigma, terrain)


class TestSlipRange:

    @pytest.mark.parametrize("s, expected", [
        (0.9, 1), (0.16, 1), (0.1599, 2), (0.0, 2), (-0.1, 3), (-0.157, 4), (-0.9, 4),
    ])
    def test_boundaries(self, s, expected):
        assert select_slip_range(s) == expected

    def test_vectorized_ids(self):
        ids = slip_range_ids(np.array([0.5, 0.05, -0.05, -0.5]))
        assert ids.tolist() == [1, 2, 3, 4]

    def test_slip_outside_unit_interval_raises(self):
        with pytest.raises(DomainError, match="slip"):
            select_slip_range(1.2)


class TestBranch:

    def test_growing_side_slip_uses_upper_curve(self):
        assert select_branch(0.1, 0.01) == "upper"
        assert select_branch(-0.1, -0.01) == "upper"

    def test_shrinking_side_slip_uses_lower_curve(self):
        assert select_branch(0.1, -0.01) == "lower"
        assert select_branch(-0.1, 0.01) == "lower"

    def test_no_step_counts_as_upper(self):
        assert select_branch(0.1, 0.0) == "upper"


class TestEvalG:

    def test_matches_polynomial_product(self, published_coeffs):
        lower = published_coeffs.get(2, "lower").factors
        expected = np.polyval(lower["g1_n"].coeffs, 0.8) * np.polyval(lower["g1_s"].coeffs, 0.08)
        got = eval_g("g1", 5.0, 0.08, 2000.0, 0.8, published_coeffs, "lower")
        assert got == pytest.approx(expected, rel=1e-12)

    def test_unknown_function_raises(self, published_coeffs):
        with pytest.raises(DomainError, match="g4"):
            eval_g("g4", 5.0, 0.08, 2000.0, 0.8, published_coeffs, "lower")

    def test_missing_range_points_to_calibration(self, published_coeffs):
        with pytest.raises(MissingArtifactError):
            eval_g("g1", 5.0, 0.5, 2000.0, 0.8, published_coeffs, "lower")

    def test_extrapolation_warns_once(self, published_coeffs, caplog):
        with caplog.at_level(logging.WARNING, logger="terrasense"):
            for _ in range(3):
                eval_g("g2", 9.0, 0.08, 2000.0, 0.8, published_coeffs, "lower")
        hits = [r for r in caplog.records if "Correction functions extrapolated" in r.getMessage()]
        assert len(hits) == 1
        assert "v above" in hits[0].getMessage()

    def test_vectorized_groups_by_range_and_branch(self, identity_coeffs, clay):
        s = np.array([0.3, 0.05, -0.05, -0.3])
        beta = np.array([0.1, -0.1, 0.1, 0.1])
        step = np.array([0.01, 0.01, -0.01, 0.0])
        g1, g2, g3 = g_values(2000.0, s, 5.0, 0.7, beta, step, identity_coeffs)
        assert np.allclose(g1, 1.0)
        assert np.allclose(g2, 0.0)
        assert np.allclose(g3, clay.k)


class TestQuadraticIntegrate:

    def test_samples_and_callable_agree(self, clay, geom):
        cg = contact_angles(0.05, 0.1, geom, clay)
        nodes, _w = quadratic_arc_nodes(cg.theta_r, cg.theta_m, cg.theta_f)
        f = lambda t: np.sin(t) + t ** 2
        assert quadratic_integrate(f(nodes), cg) == pytest.approx(quadratic_integrate(f, cg),
                                                                   rel=1e-14)

    def test_sample_count_is_checked(self, clay, geom):
        cg = contact_angles(0.05, 0.1, geom, clay)
        with pytest.raises(DomainError, match="samples"):
            quadratic_integrate(np.ones(4), cg)

    @pytest.mark.parametrize("s, beta", [(0.1, 0.05), (0.1, 0.3), (-0.5, 0.2), (0.6, -0.1)])
    def test_clay_stress_profile_within_two_percent(self, clay, geom, identity_coeffs, s, beta):
        wheel = WheelState(W=2500.0, s=s, beta=beta, v=5.5)
        h, _F = solve_sinkage_batch([wheel.W], [s], [clay.n], geom, clay)
        cg = contact_angles(float(h[0]), s, geom, clay)
        f = lambda t: surrogate_lateral_shear(t, wheel, cg, clay, identity_coeffs, geom)
        nodes, w = gauss_arc_nodes(cg.theta_r, cg.theta_m, cg.theta_f, n=32)
        reference = float(np.sum(w * f(nodes)))
        assert quadratic_integrate(f, cg) == pytest.approx(reference, rel=0.02)


class TestSurrogateStress:

    def test_identity_reproduces_base_stress(self, clay, geom, identity_coeffs):
        wheel = WheelState(W=2000.0, s=0.1, beta=0.2, v=5.0)
        cg = contact_angles(0.05, wheel.s, geom, clay)
        theta = np.linspace(cg.theta_r, cg.theta_f, 9)
        got = surrogate_lateral_shear(theta, wheel, cg, clay, identity_coeffs, geom)
        expected = _base_stress(theta, wheel, cg, geom, clay)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-9)

    def test_negative_side_slip_flips_sign(self, clay, geom, identity_coeffs):
        cg = contact_angles(0.05, 0.1, geom, clay)
        theta = np.array([cg.theta_m])
        pos = surrogate_lateral_shear(theta, WheelState(W=2000.0, s=0.1, beta=0.2, v=5.0),
                                      cg, clay, identity_coeffs, geom)
        neg = surrogate_lateral_shear(theta, WheelState(W=2000.0, s=0.1, beta=-0.2, v=5.0),
                                      cg, clay, identity_coeffs, geom)
        assert pos[0] > 0
        assert neg[0] == pytest.approx(-pos[0], rel=1e-12)

    def test_theta_outside_arc_raises(self, clay, geom, identity_coeffs):
        cg = contact_angles(0.05, 0.1, geom, clay)
        wheel = WheelState(W=2000.0, s=0.1, beta=0.2, v=5.0)
        with pytest.raises(DomainError, match="outside"):
            surrogate_lateral_shear(cg.theta_f + 0.1, wheel, cg, clay, identity_coeffs, geom)


class TestSurrogateForce:

    def test_steering_step_reduces_force(self, clay, geom):
        coeffs = GFunCoeffs.identity(clay.name, clay.k, g2=1.0)
        still = surrogate_lateral_force(WheelState(W=2000.0, s=0.1, beta=0.1, v=5.0),
                                        geom, clay, coeffs)
        stepped = surrogate_lateral_force(
            WheelState(W=2000.0, s=0.1, beta=0.1, v=5.0, delta_step=0.01), geom, clay, coeffs)
        assert 0 < stepped.F_y < still.F_y

    def test_odd_in_side_slip_and_step(self, clay, geom, published_coeffs):
        a = surrogate_lateral_force(WheelState(W=2000.0, s=0.08, beta=0.1, v=5.0,
                                               delta_step=-0.005), geom, clay, published_coeffs)
        b = surrogate_lateral_force(WheelState(W=2000.0, s=0.08, beta=-0.1, v=5.0,
                                               delta_step=0.005), geom, clay, published_coeffs)
        assert a.F_y != 0
        assert b.F_y == pytest.approx(-a.F_y, rel=1e-12)

    def test_negative_g3_is_rejected(self, clay, geom, published_coeffs):
        wheel = WheelState(W=2000.0, s=0.08, beta=0.1, v=5.0, delta_step=0.005)
        with pytest.raises(DomainError, match="g3"):
            surrogate_lateral_force(wheel, geom, clay, published_coeffs)

    def test_uncalibrated_range_is_missing(self, clay, geom, published_coeffs):
        wheel = WheelState(W=2000.0, s=0.5, beta=0.1, v=5.0, delta_step=-0.005)
        with pytest.raises(MissingArtifactError):
            surrogate_lateral_force(wheel, geom, clay, published_coeffs)

    def test_right_angle_raises(self, clay, geom, identity_coeffs):
        with pytest.raises(DomainError, match="pi/2"):
            surrogate_lateral_force_batch(2000.0, 0.1, np.pi / 2, 5.0, 0.0, clay.n, geom, clay,
                                          identity_coeffs)

    def test_batch_matches_scalar(self, clay, geom, scaled_coeffs):
        W = np.array([1500.0, 2500.0, 3500.0])
        s = np.array([0.3, 0.05, -0.4])
        beta = np.array([0.05, -0.2, 0.3])
        step = np.array([0.0, 0.01, -0.01])
        F_y, _F_z = surrogate_lateral_force_batch(W, s, beta, 5.0, step, clay.n, geom, clay,
                                                  scaled_coeffs)
        for i in range(3):
            wheel = WheelState(W=W[i], s=s[i], beta=beta[i], v=5.0, delta_step=step[i])
            single = surrogate_lateral_force(wheel, geom, clay, scaled_coeffs)
            assert F_y[i] == pytest.approx(single.F_y, rel=1e-8)

    def test_g1_scales_force_linearly(self, clay, geom, identity_coeffs, scaled_coeffs):
        wheel = WheelState(W=2000.0, s=0.2, beta=0.2, v=5.0)
        base = surrogate_lateral_force(wheel, geom, clay, identity_coeffs)
        scaled = surrogate_lateral_force(wheel, geom, clay, scaled_coeffs)
        assert scaled.F_y == pytest.approx(1.2 * base.F_y, rel=1e-12)


def _table4_points(rng, count):
    return zip(rng.uniform(1000.0, 4000.0, count), rng.uniform(-0.9, 0.9, count),
               rng.uniform(-0.4, 0.4, count), rng.uniform(0.4, 1.3, count))


def _agrees_with_base_model(W, s, beta, n, clay, geom, identity_coeffs):
    terrain = clay.with_exponent(n)
    wheel = WheelState(W=W, s=s, beta=beta, v=5.5)
    base = lateral_force_base(wheel, geom, terrain, integrator="adaptive")
    fast = surrogate_lateral_force(wheel, geom, terrain, identity_coeffs)
    assert fast.F_y == pytest.approx(base.F_y, rel=0.02, abs=1e-6)
    assert fast.F_z == pytest.approx(base.F_z, rel=3e-3)


class TestReductionToBaseModel:

    def test_random_design_points(self, clay, geom, identity_coeffs, rng):
        for W, s, beta, n in _table4_points(rng, 25):
            _agrees_with_base_model(W, s, beta, n, clay, geom, identity_coeffs)

    @pytest.mark.parametrize("W, s, beta, n", [
        (3225.0, -0.74, 0.033, 0.8),
        (1000.0, 0.9, 0.4, 0.4),
        (4000.0, -0.9, -0.4, 1.3),
        (2500.0, 0.0, 0.01, 0.5),
    ])
    def test_corners_and_small_side_slip(self, clay, geom, identity_coeffs, W, s, beta, n):
        _agrees_with_base_model(W, s, beta, n, clay, geom, identity_coeffs)


@pytest.mark.slow
def test_reduction_over_two_hundred_design_points(clay, geom, identity_coeffs):
    rng = np.random.default_rng(2024)
    for W, s, beta, n in _table4_points(rng, 200):
        _agrees_with_base_model(W, s, beta, n, clay, geom, identity_coeffs)


# ── Hysteresis and slip-range partition ──────────────────────────────────────

@pytest.fixture
def speed_load_coeffs(clay):
    """Identity g1, g3 on both curves; g2 falls with speed and grows with load."""
    coeffs = GFunCoeffs.identity(clay.name, clay.k, g2=1.0)
    for gset in list(coeffs.sets.values()):
        factors = dict(gset.factors)
        factors["g2_v"] = FactorFunction(name="g2_v", input="v", form="power",
                                         coeffs=(4.908, -0.9295))
        factors["g2_Fz"] = FactorFunction(name="g2_Fz", input="Fz", form="affine",
                                          coeffs=(1e-4, 0.7))
        coeffs = coeffs.with_set(GFunSet(gset.slip_range, gset.branch, factors))
    return coeffs


class TestHysteresis:

    def test_separation_shrinks_with_speed(self, clay, geom, speed_load_coeffs):
        gaps = [hysteresis_gap(WheelState(W=2500.0, s=0.1, beta=0.05, v=v, delta_step=0.002),
                               geom, clay, speed_load_coeffs)
                for v in (2.5, 5.5, 8.5)]
        assert gaps[0] > gaps[1] > gaps[2] > 0

    def test_separation_grows_with_load(self, clay, geom, speed_load_coeffs):
        gaps = [hysteresis_gap(WheelState(W=W, s=0.1, beta=0.05, v=5.5, delta_step=0.002),
                               geom, clay, speed_load_coeffs)
                for W in (1500.0, 2500.0, 3500.0)]
        assert gaps[0] < gaps[1] < gaps[2]

    def test_no_steering_step_collapses_the_curves(self, clay, geom, speed_load_coeffs):
        wheel = WheelState(W=2500.0, s=0.1, beta=0.05, v=5.5)
        assert hysteresis_gap(wheel, geom, clay, speed_load_coeffs) == 0.0


def _in_range(bounds, s):
    lo, hi, lo_closed, hi_closed = bounds
    above = s > lo or (lo_closed and s == lo)
    below = s < hi or (hi_closed and s == hi)
    return above and below


def test_slip_ranges_partition_the_unit_interval():
    grid = np.concatenate([np.linspace(-1.0, 1.0, 20001),
                           [lo for lo, _hi, _a, _b in SLIP_RANGES.values()]])
    ids = slip_range_ids(grid)
    for s, rid in zip(grid, ids):
        owners = [r for r, bounds in SLIP_RANGES.items() if _in_range(bounds, s)]
        assert owners == [rid], s
    assert set(ids.tolist()) == set(SLIP_RANGES)


# ── Timing ────────────────────────────────────────────────────────────────────

@pytest.mark.slow
def test_single_call_latency(clay, geom):
    coeffs = GFunCoeffs.identity(clay.name, clay.k, g2=1.0)
    wheel = WheelState(W=2500.0, s=0.1, beta=0.05, v=5.5, delta_step=0.01)
    for _ in range(200):
        surrogate_lateral_force(wheel, geom, clay, coeffs)
    times = np.empty(100_000)
    for i in range(times.size):
        t0 = time.perf_counter()
        surrogate_lateral_force(wheel, geom, clay, coeffs)
        times[i] = time.perf_counter() - t0
    assert np.percentile(times, 99) < 1e-3
