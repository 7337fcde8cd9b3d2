"""
Tests for the Bekker wheel model: static sinkage, the Newton sinkage solver
and the base lateral force.
"""

import math

import numpy as np
import pytest

from terrasense.bekker import (
    bisect_sinkage, force_tolerance, lateral_force_base, normal_force, solve_sinkage,
    solve_sinkage_batch, static_sinkage,
)
from terrasense.constants import DESIGN_BOUNDS, SLIP_BOUNDS
from terrasense.errors import DomainError
from terrasense.presets import get_terrain_preset
from terrasense.terrain import WheelState


def _random_points(rng, count):
    W = rng.uniform(*DESIGN_BOUNDS["Fz"], count)
    s = rng.uniform(*SLIP_BOUNDS, count)
    n = rng.uniform(*DESIGN_BOUNDS["n"], count)
    return W, s, n


class TestStaticSinkage:

    def test_closed_form(self, clay, geom):
        W = 2000.0
        k_eq = clay.k_c / geom.b + clay.k_phi
        base = 3 * W / (geom.b * (3 - clay.n) * k_eq * math.sqrt(2 * geom.r))
        expected = base ** (2 / (2 * clay.n + 1))
        assert static_sinkage(W, geom, clay) == pytest.approx(expected, rel=1e-12)

    def test_zero_load(self, clay, geom):
        assert static_sinkage(0.0, geom, clay) == 0.0

    def test_negative_load_raises(self, clay, geom):
        with pytest.raises(DomainError, match="load"):
            static_sinkage(-5.0, geom, clay)


class TestNormalForce:

    def test_zero_at_zero_sinkage(self, clay, geom):
        assert normal_force(0.0, 0.1, geom, clay) == 0.0

    def test_grows_with_sinkage(self, clay, geom):
        forces = [normal_force(h, 0.1, geom, clay, "gauss") for h in (0.01, 0.02, 0.04)]
        assert forces[0] < forces[1] < forces[2]

    def test_gauss_matches_adaptive(self, clay, geom):
        ref = normal_force(0.03, 0.2, geom, clay, "adaptive")
        assert normal_force(0.03, 0.2, geom, clay, "gauss") == pytest.approx(ref, rel=2e-3)


class TestSolveSinkage:

    def test_residual_within_tolerance(self, clay, geom):
        wheel = WheelState(W=2500.0, s=0.1, beta=0.0, v=5.0)
        sol = solve_sinkage(wheel, geom, clay, "gauss")
        assert sol.residual <= force_tolerance(wheel.W)
        assert 0 < sol.h < geom.r

    def test_matches_bisection(self, clay, geom):
        wheel = WheelState(W=3000.0, s=-0.3, beta=0.0, v=5.0)
        sol = solve_sinkage(wheel, geom, clay, "gauss")
        assert sol.h == pytest.approx(bisect_sinkage(wheel, geom, clay, "gauss"), abs=1e-6)

    def test_adaptive_integrator(self, sand, geom):
        wheel = WheelState(W=1500.0, s=0.05, beta=0.0, v=5.0)
        sol = solve_sinkage(wheel, geom, sand)
        assert abs(sol.F_z - wheel.W) <= force_tolerance(wheel.W)

    def test_zero_load_raises(self, clay, geom):
        with pytest.raises(DomainError, match="load"):
            solve_sinkage(WheelState(W=0.0, s=0.0, beta=0.0, v=1.0), geom, clay)

    @pytest.mark.parametrize("preset", ["sand", "sandy_loam", "clay"])
    def test_random_points_agree_with_bisection(self, preset, geom, rng):
        terrain = get_terrain_preset(preset)
        for W, s, n in zip(*_random_points(rng, 10)):
            t = terrain.with_exponent(n)
            wheel = WheelState(W=W, s=s, beta=0.0, v=5.0)
            sol = solve_sinkage(wheel, geom, t, "gauss")
            assert sol.residual <= force_tolerance(W)
            assert sol.h == pytest.approx(bisect_sinkage(wheel, geom, t, "gauss"), abs=1e-6)

    @pytest.mark.slow
    @pytest.mark.parametrize("preset", ["sand", "sandy_loam", "clay"])
    def test_thousand_points_against_bisection(self, preset, geom):
        rng = np.random.default_rng(7)
        terrain = get_terrain_preset(preset)
        W, s, n = _random_points(rng, 1000)
        h, F = solve_sinkage_batch(W, s, n, geom, terrain)
        assert np.all(np.abs(F - W) <= force_tolerance(W))
        for i in range(W.size):
            wheel = WheelState(W=W[i], s=s[i], beta=0.0, v=5.0)
            ref = bisect_sinkage(wheel, geom, terrain.with_exponent(n[i]), "gauss")
            assert h[i] == pytest.approx(ref, abs=1e-6)


class TestSolveSinkageBatch:

    def test_matches_scalar_solver(self, clay, geom):
        W = np.array([1200.0, 2500.0, 3800.0])
        s = np.array([0.3, 0.05, -0.2])
        n = np.array([0.5, 0.8, 1.1])
        h, F = solve_sinkage_batch(W, s, n, geom, clay)
        for i in range(3):
            sol = solve_sinkage(WheelState(W=W[i], s=s[i], beta=0.0, v=5.0), geom,
                                clay.with_exponent(n[i]), "gauss")
            assert h[i] == pytest.approx(sol.h, abs=1e-6)
        assert np.all(np.abs(F - W) <= force_tolerance(W))

    def test_rejects_exponent_out_of_range(self, clay, geom):
        with pytest.raises(DomainError, match="exponent"):
            solve_sinkage_batch([2000.0], [0.1], [0.0], geom, clay)

    def test_rejects_non_positive_load(self, clay, geom):
        with pytest.raises(DomainError, match="load"):
            solve_sinkage_batch([0.0], [0.1], [0.5], geom, clay)


class TestLateralForceBase:

    def test_zero_side_slip_gives_zero_force(self, clay, geom):
        f = lateral_force_base(WheelState(W=2000.0, s=0.1, beta=0.0, v=5.0), geom, clay, "gauss")
        assert f.F_y == 0.0
        assert f.F_z == pytest.approx(2000.0, abs=force_tolerance(2000.0))

    def test_force_carries_sign_of_beta(self, clay, geom):
        pos = lateral_force_base(WheelState(W=2000.0, s=0.1, beta=0.1, v=5.0), geom, clay, "gauss")
        neg = lateral_force_base(WheelState(W=2000.0, s=0.1, beta=-0.1, v=5.0), geom, clay, "gauss")
        assert pos.F_y > 0
        assert neg.F_y == pytest.approx(-pos.F_y, rel=1e-12)

    def test_grows_with_side_slip(self, clay, geom):
        forces = [lateral_force_base(WheelState(W=2000.0, s=0.1, beta=b, v=5.0), geom, clay,
                                     "gauss").F_y for b in (0.05, 0.1, 0.2)]
        assert forces[0] < forces[1] < forces[2]

    def test_bounded_by_shear_strength(self, clay, geom):
        # tau_y <= c + sigma tan(phi) and the contact arc is shorter than 1 rad
        f = lateral_force_base(WheelState(W=2000.0, s=0.1, beta=1.2, v=5.0), geom, clay, "gauss")
        assert 0 < f.F_y < 2000.0 * math.tan(clay.phi) * 1.5 + clay.c * geom.b * geom.r

    def test_right_angle_raises(self, clay, geom):
        with pytest.raises(DomainError, match="pi/2"):
            lateral_force_base(WheelState(W=2000.0, s=0.1, beta=math.pi / 2, v=5.0), geom, clay)
