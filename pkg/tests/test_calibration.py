"""
Tests for the calibration pipeline: sweep design, per-sweep factor
extraction, factor-function fitting and surrogate validation.
"""

import numpy as np
import pytest

from terrasense.calibration import (
    BranchFit, CorrectionSample, DesignPoint, SweepDesign, SweepRecord, ValidationDesign,
    calibrate, calibration_rows, check_positive_g3, design_centre, extract_factors, factor_rms,
    fit_gfuns, fit_set, holdout_split, normalize, synthetic_loop, validate_surrogate,
)
from terrasense.coeffs import G_NAMES
from terrasense.constants import SLIP_RANGES
from terrasense.errors import CalibrationError, ConfigError
from terrasense.scm import ScmConfig
from terrasense.surrogate import select_slip_range


def _samples_from(gset, design):
    """Per-sweep factors that follow a known coefficient set exactly."""
    samples = []
    for p in design.points():
        inputs = {"Fz": np.array(p.W), "s": np.array(p.s), "v": np.array(p.v), "n": np.array(p.n)}
        g = [float(gset.evaluate(name, inputs)) for name in G_NAMES]
        fit = BranchFit(g1=g[0], g2=g[1], g3=g[2], residual=0.0, ok=True)
        samples.append(CorrectionSample(point=p, fits={gset.branch: fit}))
    return samples


class TestSweepDesign:

    def test_point_counts(self):
        assert len(SweepDesign().points()) == 2800
        assert len(SweepDesign.desk().points()) == 1080

    @pytest.mark.parametrize("slip_range", [1, 2, 3, 4])
    def test_slip_levels_stay_inside_their_range(self, slip_range):
        levels = SweepDesign().slip_levels(slip_range)
        assert len(levels) == 5
        assert all(select_slip_range(s) == slip_range for s in levels)

    def test_explicit_levels_override_counts(self):
        design = SweepDesign(loads=(2000.0,), speeds=(5.0,), exponents=(0.5, 0.9), ranges=(2,))
        assert len(design.points()) == 10
        assert design.load_levels() == (2000.0,)

    def test_levels_outside_the_box_raise(self):
        with pytest.raises(ConfigError, match="outside the development box"):
            SweepDesign(loads=(500.0,))

    def test_unknown_range_raises(self):
        with pytest.raises(ConfigError, match="slip range"):
            SweepDesign(ranges=(5,))

    def test_duration_must_cover_a_period(self):
        with pytest.raises(ConfigError, match="steering period"):
            SweepDesign(duration=0.5)

    def test_sweep_spec_carries_the_point(self):
        design = SweepDesign.desk()
        p = design.points()[0]
        spec = design.sweep_spec(p)
        assert (spec.W, spec.s, spec.v, spec.n) == (p.W, p.s, p.v, p.n)
        assert spec.duration == design.duration


class TestExtractFactors:

    @pytest.fixture
    def point(self):
        return DesignPoint(2, 2000.0, 0.08, 5.0, 0.5)

    def test_recovers_known_factors(self, clay, geom, point):
        g = (1.3, 50.0, 0.015)
        loop = synthetic_loop(point, g, clay, geom)
        sample = extract_factors(loop, point, clay, geom)
        for branch in ("upper", "lower"):
            fit = sample.fits[branch]
            assert fit.ok, fit.message
            assert (fit.g1, fit.g2, fit.g3) == pytest.approx(g, rel=0.01)
            assert fit.residual < 1e-3

    def test_g1_is_linear_in_the_force(self, clay, geom, point):
        loop = synthetic_loop(point, (1.0, 20.0, 0.02), clay, geom)
        single = extract_factors(loop, point, clay, geom).fits["upper"]
        loop.F_y = 2.0 * loop.F_y
        double = extract_factors(loop, point, clay, geom).fits["upper"]
        assert double.g1 == pytest.approx(2.0 * single.g1, rel=1e-4)
        assert double.g3 == pytest.approx(single.g3, rel=1e-4)

    def test_flat_loop_is_flagged(self, clay, geom, point):
        loop = synthetic_loop(point, (1.0, 0.0, 0.02), clay, geom)
        loop.F_y = np.zeros_like(loop.F_y)
        sample = extract_factors(loop, point, clay, geom)
        assert not sample.fits["upper"].ok
        assert "no lateral force" in sample.fits["upper"].message


class TestFitSet:

    def test_recovers_a_product_form_set(self, published_coeffs):
        reference = published_coeffs.get(2, "lower")
        design = SweepDesign.desk(ranges=(2,))
        samples = _samples_from(reference, design)
        gset, rms = fit_set(samples, 2, "lower", reference=reference)
        assert set(gset.factors) == set(reference.factors)
        for sm in samples:
            inputs = {k: np.array(v) for k, v in sm.inputs().items()}
            for g in G_NAMES:
                want = getattr(sm.fits["lower"], g)
                got = float(gset.evaluate(g, inputs))
                assert abs(got - want) <= max(0.05 * abs(want), 1e-3)
        assert rms["g3"] < 1e-3

    def test_fit_gfuns_covers_both_branches(self, published_coeffs):
        lower = published_coeffs.get(2, "lower")
        samples = [CorrectionSample(sm.point, {"lower": sm.fits["lower"], "upper": sm.fits["lower"]})
                   for sm in _samples_from(lower, SweepDesign.desk(ranges=(2,)))]
        coeffs = fit_gfuns(samples, "clay")
        assert coeffs.ranges() == [2]
        assert coeffs.calibrated
        assert set(coeffs.meta["fit_rms"]) == {"2/lower", "2/upper"}
        assert coeffs.meta["fit_rms"]["2/upper"]["g3"] < 1e-3
        assert factor_rms(coeffs, samples)["g3"] < 1e-3

    def test_too_few_exponent_levels_names_the_factor(self, published_coeffs):
        reference = published_coeffs.get(2, "lower")
        design = SweepDesign.desk(ranges=(2,), exponents=(0.5, 0.9))
        samples = _samples_from(reference, design)
        with pytest.raises(CalibrationError, match="g1_n"):
            fit_set(samples, 2, "lower", reference=reference)

    def test_no_samples_for_the_range(self, published_coeffs):
        samples = _samples_from(published_coeffs.get(2, "lower"), SweepDesign.desk(ranges=(2,)))
        with pytest.raises(CalibrationError, match="slip range 3"):
            fit_set(samples, 3, "lower")

    def test_negative_g3_is_rejected(self, published_coeffs):
        with pytest.raises(CalibrationError, match="g3"):
            check_positive_g3(published_coeffs.get(2, "upper"))
        assert check_positive_g3(published_coeffs.get(2, "lower")) > 0


class TestNormalize:

    def test_products_are_unchanged(self, published_coeffs, rng):
        factors = list(published_coeffs.get(2, "lower").factors.values())
        centre = design_centre(2)
        out = normalize(factors, centre)
        inputs = {"Fz": rng.uniform(1000, 4000, 20), "s": rng.uniform(0.0, 0.16, 20),
                  "v": rng.uniform(2.5, 8.5, 20), "n": rng.uniform(0.6, 1.3, 20)}
        for g in G_NAMES:
            before = np.prod([f(inputs[f.input]) for f in factors if f.group == g], axis=0)
            after = np.prod([f(inputs[f.input]) for f in out if f.group == g], axis=0)
            assert after == pytest.approx(before, rel=1e-9, abs=1e-12)

    def test_non_leading_factors_are_one_at_the_centre(self, published_coeffs):
        factors = list(published_coeffs.get(2, "lower").factors.values())
        centre = design_centre(2)
        out = normalize(factors, centre)
        for g in G_NAMES:
            group = [f for f in out if f.group == g]
            for f in group[1:]:
                assert f(centre[f.input]) == pytest.approx(1.0)

    def test_design_centre(self):
        c = design_centre(3)
        assert c["s"] == pytest.approx(0.5 * SLIP_RANGES[3][0])
        assert c["Fz"] == 2500.0


class TestHoldout:

    def test_split_sizes(self, published_coeffs):
        samples = _samples_from(published_coeffs.get(2, "lower"), SweepDesign.desk(ranges=(2,)))
        train, test = holdout_split(samples, 0.2, seed=3)
        assert len(test) == round(0.2 * len(samples))
        assert len(train) + len(test) == len(samples)
        assert not {id(s) for s in train} & {id(s) for s in test}

    def test_split_is_reproducible(self, published_coeffs):
        samples = _samples_from(published_coeffs.get(2, "lower"), SweepDesign.desk(ranges=(2,)))
        a = holdout_split(samples, seed=9)[1]
        b = holdout_split(samples, seed=9)[1]
        assert [s.point for s in a] == [s.point for s in b]


class TestValidation:

    def test_design_is_deterministic(self):
        a = ValidationDesign(n_points=20, seed=4).points()
        b = ValidationDesign(n_points=20, seed=4).points()
        assert a == b
        assert all(select_slip_range(p.s) == p.slip_range for p in a)

    def test_surrogate_beats_base_on_matching_loops(self, clay, geom, scaled_coeffs):
        points = [DesignPoint(1, 2000.0, 0.3, 5.0, 0.6), DesignPoint(2, 3000.0, 0.05, 4.0, 0.9),
                  DesignPoint(4, 1500.0, -0.4, 7.0, 1.1)]
        records = [SweepRecord(point=p, trace=synthetic_loop(p, (1.2, 0.0, clay.k), clay, geom))
                   for p in points]
        records.append(SweepRecord(point=points[0], error="sweep failed"))
        report = validate_surrogate(scaled_coeffs, ValidationDesign(n_points=3), clay, geom,
                                    records=records)
        assert len(report.rows) == 3
        assert len(report.failures) == 1
        for row in report.rows:
            assert row.rel_surrogate == pytest.approx(0.0, abs=1e-9)
            assert row.rel_base > 0.05
            assert len(row.as_list()) == 10
        assert report.aggregate_surrogate < report.aggregate_base

    def test_incomplete_coefficients_raise(self, clay, published_coeffs):
        with pytest.raises(CalibrationError, match="all four slip ranges"):
            validate_surrogate(published_coeffs, ValidationDesign(n_points=1), clay)

    def test_empty_design(self, clay, published_coeffs):
        report = validate_surrogate(published_coeffs, ValidationDesign(n_points=0), clay)
        assert report.rows == []


class TestCalibrationRows:

    def test_one_row_per_branch(self):
        p = DesignPoint(2, 2000.0, 0.08, 5.0, 0.5)
        fit = BranchFit(1.0, 2.0, 0.01, 0.02, True)
        rows = calibration_rows([CorrectionSample(p, {"lower": fit, "upper": fit})])
        assert len(rows) == 2
        assert rows[0][:2] == [2, "lower"]
        assert all(len(r) == 11 for r in rows)
        assert rows[0][-1] == 1


@pytest.mark.slow
def test_desk_calibration_improves_on_base_model(clay, geom):
    result = calibrate(SweepDesign.desk(), clay, geom, ScmConfig(spacing=0.02),
                       validation=ValidationDesign(n_points=10), workers=2)
    assert result.coeffs.is_complete()
    assert result.coeffs.calibrated
    assert result.validation.aggregate_surrogate < result.validation.aggregate_base
