"""
End-to-end tests for the command-line app: argument parsing, exit codes,
run manifests and small sweep and estimate runs.
"""

import glob
import json
import os

import pytest

from terrasense.cli import COMMANDS, build_parser, main
from terrasense.coeffs import GFunCoeffs, save_coeffs
from terrasense.runs import load_manifest, read_csv


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def _only_run(base, prefix):
    found = sorted(glob.glob(os.path.join(str(base), f"{prefix}*")))
    assert len(found) == 1, found
    return found[0]


class TestParser:

    def test_subcommands(self):
        parser = build_parser()
        for name in COMMANDS:
            extra = ["somewhere"] if name == "report" else []
            assert parser.parse_args([name] + extra).command == name

    def test_common_options(self):
        args = build_parser().parse_args(["calibrate", "--seed", "4", "--desk-scale", "-v"])
        assert (args.seed, args.desk_scale, args.verbose) == (4, True, True)
        assert args.config == ""

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestExitCodes:

    def test_runs_on_empty_base(self, tmp_path, capsys):
        assert main(["runs", "--out", str(tmp_path)]) == 0
        assert "No runs" in capsys.readouterr().out

    def test_missing_config(self, tmp_path):
        assert main(["sweep", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 2

    def test_bad_config_line(self, tmp_path):
        cfg = _write(tmp_path / "bad.ini", "[sweep]\nW = 2000\nwheel = 3\n")
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 2
        assert not os.path.exists(tmp_path / "sweep-clay")

    def test_estimate_without_coefficients(self, tmp_path):
        cfg = _write(tmp_path / "run.ini", "[scenario]\nplant = model\nduration = 1\n")
        assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "runs")]) == 2
        manifest = load_manifest(_only_run(tmp_path / "runs", "estimate-clay"))
        assert manifest.status == "failed"
        assert "calibrate" in manifest.error
        assert manifest.error.startswith("[coefficients]")

    def test_explicit_coefficients_must_exist(self, tmp_path):
        cfg = _write(tmp_path / "run.ini", "[scenario]\nplant = model\n")
        code = main(["estimate", "--config", cfg, "--out", str(tmp_path),
                     "--coefficients", str(tmp_path / "none.json")])
        assert code == 2


class TestRuns:

    def test_sweep_then_report(self, tmp_path):
        cfg = _write(tmp_path / "sweep.ini",
                     "[terrain]\npreset = sand\n\n[sweep]\nfrequency = 2\nduration = 1.0\n"
                     "settle = 0.1\n\n[scm]\nspacing = 0.02\n")
        out = tmp_path / "runs"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0

        run_dir = _only_run(out, "sweep-sand")
        manifest = load_manifest(run_dir)
        assert manifest.status == "ok"
        assert set(manifest.artifacts) == {"sweep.csv", "sweep_compare.csv"}
        assert manifest.coefficients == {}
        assert open(os.path.join(run_dir, "config.ini")).read().startswith("[terrain]")
        compare = read_csv(os.path.join(run_dir, "sweep_compare.csv"), expect="sweep_compare")
        assert len(compare.rows) == 501

        assert main(["report", run_dir]) == 0
        loops = read_csv(os.path.join(run_dir, "loops.csv"), expect="loops")
        assert 0 < len(loops.rows) < 501
        assert os.path.exists(os.path.join(run_dir, "loops.gp"))

    def test_estimate_on_model_plant(self, tmp_path, clay, capsys):
        coeffs = save_coeffs(GFunCoeffs.identity("clay", clay.k), str(tmp_path / "id.json"))
        cfg = _write(tmp_path / "run.ini", "[scenario]\nplant = model\nduration = 1\n")
        out = tmp_path / "runs"
        code = main(["estimate", "--config", cfg, "--out", str(out), "--coefficients", coeffs,
                     "--seed", "2"])
        assert code == 0

        run_dir = _only_run(out, "estimate-clay")
        manifest = load_manifest(run_dir)
        assert manifest.seed == 2
        assert manifest.coefficients["path"] == os.path.abspath(coeffs)
        assert len(manifest.coefficients["sha256"]) == 64
        assert "horizon_mse.csv" not in manifest.artifacts
        summary = read_csv(os.path.join(run_dir, "summary.csv"), expect="summary")
        assert [r[0] for r in summary.rows] == ["front", "rear"]

        assert main(["report", run_dir]) == 0
        assert os.path.exists(os.path.join(run_dir, "convergence.csv"))
        assert os.path.exists(os.path.join(run_dir, "trajectory.csv"))

        assert main(["runs", "--out", str(out)]) == 0
        assert "estimate-clay" in capsys.readouterr().out

    def test_filter_divergence_keeps_partial_rows(self, tmp_path, clay):
        coeffs = save_coeffs(GFunCoeffs.identity("clay", clay.k), str(tmp_path / "id.json"))
        cfg = _write(tmp_path / "run.ini",
                     "[scenario]\nplant = model\nduration = 1\n\n[ukf]\nq_scale = 1e12\n")
        out = tmp_path / "runs"
        code = main(["estimate", "--config", cfg, "--out", str(out), "--coefficients", coeffs])
        assert code == 3

        run_dir = _only_run(out, "estimate-clay")
        manifest = load_manifest(run_dir)
        assert manifest.status == "failed"
        assert "diverged" in manifest.error
        assert {"plant.csv", "estimation.csv", "diagnostics.json"} <= set(manifest.artifacts)
        est = read_csv(os.path.join(run_dir, "estimation.csv"), expect="estimation")
        assert len(est.rows) == 1
        with open(os.path.join(run_dir, "diagnostics.json"), encoding="utf-8") as f:
            diag = json.load(f)
        assert "diverged" in diag["error"]
        assert diag["diagnostics"]["t"] == pytest.approx(0.012)
        assert len(diag["diagnostics"]["z_hat_history"]) == 1
        assert "P_diag" in diag["diagnostics"]["detail"]
