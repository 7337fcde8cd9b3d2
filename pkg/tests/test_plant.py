"""
Tests for the ground-truth plant: configuration checks, the surrogate-driven
plant, the grid-driven plant and the measurement stream.
"""

import numpy as np
import pytest

from terrasense.errors import ConfigError, DomainError
from terrasense.plant import Plant, PlantConfig, simulate
from terrasense.vehicle import DriveProfile, straight_profile


class TestPlantConfig:

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="plant kind"):
            PlantConfig(kind="analytic")

    def test_measurement_period_must_be_a_multiple(self):
        with pytest.raises(ConfigError, match="whole multiple"):
            PlantConfig(dt=0.002, measurement_dt=0.005)

    def test_six_sensor_sigmas(self):
        with pytest.raises(ConfigError, match="six"):
            PlantConfig(sensor_sigmas=(1.0,) * 5)

    def test_default_measurement_rate(self):
        assert PlantConfig().measure_every == 12

    def test_model_plant_needs_coefficients(self, vehicle, geom, clay):
        with pytest.raises(ConfigError, match="coefficients"):
            Plant(vehicle, geom, clay, straight_profile(5.0), PlantConfig(kind="model"))


class TestModelPlant:

    def test_straight_run(self, vehicle, geom, clay, identity_coeffs):
        cfg = PlantConfig(kind="model", duration=0.5)
        trace = simulate(vehicle, geom, clay, straight_profile(5.0), cfg, coeffs=identity_coeffs)
        assert trace.t.size == 251
        assert trace.state_at(0.5)[0] == pytest.approx(2.5, rel=1e-9)
        assert np.all(trace.states[:, 1] == 0.0)
        assert trace.meas_t.size == 21
        assert trace.meas_t[1] == pytest.approx(0.024)
        assert trace.rows().shape == (251, 12)
        assert trace.measurement_rows().shape == (21, 7)
        assert trace.n_true == (0.5, 0.5)

    def test_final_row_has_no_forces(self, vehicle, geom, clay, identity_coeffs):
        cfg = PlantConfig(kind="model", duration=0.1)
        trace = simulate(vehicle, geom, clay, straight_profile(5.0), cfg, coeffs=identity_coeffs)
        assert np.all(np.isnan(trace.F_y[-1]))
        assert np.all(np.isfinite(trace.F_y[:-1]))

    def test_left_steer_turns_left(self, vehicle, geom, clay, identity_coeffs):
        cfg = PlantConfig(kind="model", duration=1.0, sensor_sigmas=(0.0,) * 6)
        trace = simulate(vehicle, geom, clay, DriveProfile(), cfg, coeffs=identity_coeffs)
        assert trace.states[-1, 2] > 0
        assert trace.F_y[10, 0] > 0

    def test_same_seed_same_measurements(self, vehicle, geom, clay, identity_coeffs):
        runs = [simulate(vehicle, geom, clay, straight_profile(5.0),
                         PlantConfig(kind="model", duration=0.1, seed=s), coeffs=identity_coeffs)
                for s in (4, 4, 5)]
        assert np.array_equal(runs[0].meas, runs[1].meas)
        assert not np.array_equal(runs[0].meas, runs[2].meas)

    def test_noise_free_sensors_read_the_state(self, vehicle, geom, clay, identity_coeffs):
        cfg = PlantConfig(kind="model", duration=0.1, sensor_sigmas=(0.0,) * 6)
        trace = simulate(vehicle, geom, clay, straight_profile(5.0), cfg, coeffs=identity_coeffs)
        for t, m in zip(trace.meas_t, trace.meas):
            assert np.array_equal(m, trace.state_at(t))

    def test_lookups(self, vehicle, geom, clay, identity_coeffs):
        cfg = PlantConfig(kind="model", duration=0.1)
        trace = simulate(vehicle, geom, clay, straight_profile(5.0), cfg, coeffs=identity_coeffs)
        assert trace.measurement_at(0.048) is not None
        assert trace.measurement_at(0.01) is None
        with pytest.raises(DomainError, match="outside"):
            trace.state_at(1.0)


class TestScmPlant:

    def test_straight_run_stays_on_the_line(self, vehicle, geom, clay, coarse_scm):
        cfg = PlantConfig(kind="scm", duration=0.1)
        trace = simulate(vehicle, geom, clay, straight_profile(5.0), cfg, scm=coarse_scm)
        assert np.all(trace.states[:, 1] == 0.0)
        assert np.all(trace.states[:, 2] == 0.0)
        assert trace.state_at(0.1)[0] == pytest.approx(0.5, rel=1e-9)
        assert np.all(trace.F_z[:-1] > 0)

    def test_step_returns_inputs_and_forces(self, vehicle, geom, clay, coarse_scm):
        plant = Plant(vehicle, geom, clay, straight_profile(5.0), PlantConfig(kind="scm"),
                      coarse_scm)
        inp, out = plant.step()
        assert inp.delta == 0.0
        assert out.F_y == (0.0, 0.0)
        assert plant.state.step == 1
        assert plant.state.t == pytest.approx(0.002)
