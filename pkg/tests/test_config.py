"""
Tests for INI run configuration: defaults, overrides, line-numbered errors
and the bundled scenario files.
"""

import glob
import os

import pytest

from terrasense.config import (
    DesignSection, RunConfig, config_summary, default_config, load_config, parse_config,
)
from terrasense.errors import ConfigError
from terrasense.presets import SCENARIO_DIR


class TestDefaults:

    def test_default_builders(self):
        cfg = default_config()
        assert cfg.terrain_params().name == "clay"
        assert cfg.geometry().r == 0.45
        assert cfg.vehicle_params().M_t == 1400.0
        assert cfg.sweep_spec().n == cfg.terrain_params().n
        assert len(cfg.sweep_design().points()) == 1080
        assert cfg.plant_config().kind == "scm"
        assert cfg.estimator_config().n_f0 == 0.7

    def test_full_scale_design(self):
        cfg = RunConfig(design=DesignSection(scale="full"))
        assert len(cfg.sweep_design().points()) == 2800
        assert len(cfg.sweep_design(desk=True).points()) == 1080

    def test_plant_duration_override(self):
        cfg = default_config()
        assert cfg.plant_config(seed=3, duration=2.0).duration == 2.0
        assert cfg.plant_config().duration == 30.0


class TestParsing:

    def test_overrides_and_case(self):
        cfg = parse_config("[Terrain]\npreset = Sandy Loam\nn = 0.8\n\n[sweep]\nW = 3000\n")
        assert cfg.terrain.preset == "Sandy Loam"
        assert cfg.terrain_params().name == "sandy_loam"
        assert cfg.terrain_params().n == 0.8
        assert cfg.sweep.W == 3000.0

    def test_tuples(self):
        cfg = parse_config("[design]\nloads = 1000, 2500 4000\nranges = 2,3\n")
        assert cfg.design.loads == (1000.0, 2500.0, 4000.0)
        assert cfg.design.ranges == (2, 3)

    def test_optional_none(self):
        cfg = parse_config("[sweep]\nn = none\n")
        assert cfg.sweep.n is None

    def test_inline_comments(self):
        cfg = parse_config("[sweep]\ns = 0.2   # drive slip\nv = 4 ; m/s\n")
        assert cfg.sweep.s == 0.2
        assert cfg.sweep.v == 4.0

    def test_ukf_exponent_noise(self):
        cfg = parse_config("[ukf]\nq_n = 1e-5\nr_scale = 2\n")
        ukf = cfg.ukf_config()
        assert ukf.Q[6, 6] == ukf.Q[7, 7] == 1e-5
        assert ukf.R[0, 0] == pytest.approx(2.0 * default_config().ukf_config().R[0, 0])

    def test_summary_lists_changed_keys(self):
        cfg = parse_config("[scenario]\nplant = model\nduration = 5\n")
        assert config_summary(cfg) == ["[scenario] plant = model", "[scenario] duration = 5.0"]
        assert config_summary(default_config()) == []


class TestErrors:

    def _line(self, text):
        with pytest.raises(ConfigError) as exc:
            parse_config(text, "run.ini")
        return exc.value

    def test_unknown_key(self):
        err = self._line("[sweep]\nW = 2000\nwidth = 3\n")
        assert err.line == 3
        assert "unknown key 'width'" in str(err)
        assert str(err).startswith("run.ini:3:")

    def test_unknown_section(self):
        err = self._line("[sweep]\nW = 2000\n\n[wheels]\nr = 0.4\n")
        assert err.line == 4
        assert "unknown section" in str(err)

    def test_bad_number(self):
        err = self._line("[sweep]\nW = heavy\n")
        assert err.line == 2
        assert "cannot parse" in str(err)

    def test_non_finite_number(self):
        err = self._line("[sweep]\nv = inf\n")
        assert err.line == 2

    def test_unknown_preset(self):
        err = self._line("[terrain]\npreset = mud\n")
        assert err.line == 2
        assert "valid presets" in str(err)

    def test_unknown_design_scale(self):
        err = self._line("[design]\nworkers = 2\nscale = huge\n")
        assert err.line == 3

    def test_key_outside_section(self):
        err = self._line("W = 2000\n[sweep]\n")
        assert err.line == 1

    def test_duplicate_key(self):
        err = self._line("[sweep]\nW = 2000\nW = 3000\n")
        assert err.line == 3

    def test_domain_errors_point_at_the_section(self):
        cfg = parse_config("[wheel]\nr = 0.4\n\n[terrain]\nn = 2.5\n", "run.ini")
        with pytest.raises(ConfigError, match="sinkage exponent") as exc:
            cfg.terrain_params()
        assert exc.value.line == 4
        assert exc.value.path == "run.ini"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.ini"))


class TestScenarioFiles:

    @pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.ini"))),
                             ids=os.path.basename)
    def test_bundled_scenarios_load(self, path):
        cfg = load_config(path)
        assert cfg.path == path
        cfg.terrain_params()
        cfg.scm_config()
        cfg.estimator_config()
        cfg.sweep_spec()

    def test_scenarios_are_present(self):
        names = {os.path.basename(p) for p in glob.glob(os.path.join(SCENARIO_DIR, "*.ini"))}
        assert {"clay.ini", "sandy_loam.ini", "sweep.ini", "calibrate_clay.ini"} <= names
