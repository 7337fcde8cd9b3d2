from __future__ import annotations
# Command implementations for the CLI app: sweep, calibrate, estimate, runs.
import logging
import math
import os
import shutil
from typing import Optional

import numpy as np

from .bekker import lateral_force_base
from .calibration import DesignPoint, calibrate, calibration_rows, surrogate_loop
from .coeffs import GFunCoeffs, load_coeffs, save_coeffs
from .config import RunConfig
from .constants import CSV_SCHEMAS, LOGGER_NAME
from .errors import FilterError, MissingArtifactError, NumericalError
from .estimator import AugmentedModel, convergence_summary, horizon_rows, run_estimation
from .plant import simulate
from .presets import find_coefficients
from .runs import (
    RunManifest, coefficients_dir, file_sha256, list_recent_runs, runs_base_for, write_csv,
    write_json,
)
from .scm import run_sweep
from .surrogate import select_slip_range
from .terrain import WheelState

log = logging.getLogger(LOGGER_NAME)


def coefficients_name(terrain: str) -> str:
    return f"{terrain}_gfun.json"


class CommandsMixin:
    """Expects the host to provide _start_run(args, cfg, command, terrain) and _finish_run(manifest)."""

    # ── Coefficients ─────────────────────────────────────────────────────────

    def _resolve_coefficients(self, args, cfg: RunConfig, terrain: str) -> Optional[str]:
        explicit = getattr(args, "coefficients", "") or cfg.scenario.coefficients
        if explicit:
            if not os.path.exists(explicit):
                raise MissingArtifactError(
                    f"coefficient file {explicit} not found; run `python -m terrasense calibrate` "
                    f"to create it")
            return explicit
        return find_coefficients(terrain, [coefficients_dir(args.out)])

    def _record_coefficients(self, manifest: RunManifest, path: str) -> None:
        manifest.coefficients = {"path": os.path.abspath(path), "sha256": file_sha256(path)}

    # ── sweep ────────────────────────────────────────────────────────────────

    def _cmd_sweep(self, args, cfg: RunConfig) -> int:
        terrain, geom, scm = cfg.terrain_params(), cfg.geometry(), cfg.scm_config()
        spec = cfg.sweep_spec()
        manifest, run_dir = self._start_run(args, cfg, "sweep", terrain.name)

        self._stage = "scm-ref"
        trace = run_sweep(spec, terrain, geom, scm)

        self._stage = "bekker-model"
        sweep_terrain = terrain.with_exponent(spec.n)
        F_base = np.array([
            lateral_force_base(WheelState(W=spec.W, s=spec.s, beta=float(b), v=spec.v),
                               geom, sweep_terrain, integrator="gauss").F_y
            for b in trace.beta])

        self._stage = "surrogate-model"
        F_sur = np.full(trace.t.size, math.nan)
        try:
            path = self._resolve_coefficients(args, cfg, terrain.name)
        except MissingArtifactError as e:
            log.warning("Surrogate column left empty: %s", e)
        else:
            coeffs = load_coeffs(path)
            self._record_coefficients(manifest, path)
            point = DesignPoint(select_slip_range(spec.s), spec.W, spec.s, spec.v, spec.n)
            F_sur = surrogate_loop(coeffs, point, trace.beta, trace.delta_step, terrain, geom)

        write_csv(os.path.join(run_dir, "sweep.csv"), "sweep", trace.rows())
        compare = np.column_stack([trace.t, trace.beta, trace.delta_step, trace.F_y, F_base, F_sur])
        write_csv(os.path.join(run_dir, "sweep_compare.csv"), "sweep_compare", compare)
        manifest.add_artifact("sweep.csv", "sweep")
        manifest.add_artifact("sweep_compare.csv", "sweep_compare")
        log.info("Sweep done: peak |Fy| SCM %.1f N, base %.1f N", np.abs(trace.F_y).max(),
                 np.abs(F_base).max())
        return self._finish_run(manifest)

    # ── calibrate ────────────────────────────────────────────────────────────

    def _cmd_calibrate(self, args, cfg: RunConfig) -> int:
        terrain, geom, scm = cfg.terrain_params(), cfg.geometry(), cfg.scm_config()
        design = cfg.sweep_design(desk=True if args.desk_scale else None)
        validation = cfg.validation_design()
        manifest, run_dir = self._start_run(args, cfg, "calibrate", terrain.name)

        self._stage = "calibration"
        result = calibrate(design, terrain, geom, scm, validation, workers=cfg.design.workers)

        name = coefficients_name(terrain.name)
        path = save_coeffs(result.coeffs, os.path.join(run_dir, name))
        manifest.add_artifact(name, "gfun-coeffs")
        if result.coeffs.is_complete():
            published = os.path.join(coefficients_dir(args.out), name)
            os.makedirs(os.path.dirname(published), exist_ok=True)
            shutil.copyfile(path, published)
            log.info("Published coefficients to %s", published)
        self._record_coefficients(manifest, path)

        write_csv(os.path.join(run_dir, "calibration.csv"), "calibration",
                  calibration_rows(result.samples))
        manifest.add_artifact("calibration.csv", "calibration")
        if result.validation.rows:
            write_csv(os.path.join(run_dir, "validation.csv"), "validation",
                      [r.as_list() for r in result.validation.rows])
            manifest.add_artifact("validation.csv", "validation")
            log.info("Held-out error (RMS / peak): surrogate %.3f vs base %.3f",
                     result.validation.aggregate_surrogate, result.validation.aggregate_base)
        return self._finish_run(manifest)

    # ── estimate ─────────────────────────────────────────────────────────────

    def _cmd_estimate(self, args, cfg: RunConfig) -> int:
        terrain, geom, scm = cfg.terrain_params(), cfg.geometry(), cfg.scm_config()
        params, profile = cfg.vehicle_params(), cfg.drive_profile()
        est_cfg = cfg.estimator_config()
        plant_cfg = cfg.plant_config(seed=args.seed)
        manifest, run_dir = self._start_run(args, cfg, "estimate", terrain.name)

        self._stage = "coefficients"
        path = self._resolve_coefficients(args, cfg, terrain.name)
        coeffs: GFunCoeffs = load_coeffs(path)
        if not coeffs.is_complete():
            raise MissingArtifactError(f"{path} does not cover all four slip ranges; "
                                       f"rerun `python -m terrasense calibrate`")
        self._record_coefficients(manifest, path)

        self._stage = "plant"
        trace = simulate(params, geom, terrain, profile, plant_cfg, scm, coeffs)
        write_csv(os.path.join(run_dir, "plant.csv"), "plant", trace.rows())
        write_csv(os.path.join(run_dir, "measurements.csv"), "measurements",
                  trace.measurement_rows())
        manifest.add_artifact("plant.csv", "plant")
        manifest.add_artifact("measurements.csv", "measurements")

        self._stage = "ukf-estimator"
        try:
            est = run_estimation(trace, profile, params, geom, terrain, coeffs, est_cfg)
        except FilterError as e:
            self._keep_filter_failure(manifest, run_dir, e)
            raise
        write_csv(os.path.join(run_dir, "estimation.csv"), "estimation", est.rows())
        cols = CSV_SCHEMAS["summary"][1]
        summary = convergence_summary(est, est_cfg.last_window)
        write_csv(os.path.join(run_dir, "summary.csv"), "summary",
                  [[row[c] for c in cols] for row in summary])
        for row in summary:
            log.info("%s axle: truth %.3f, guess %.3f, converged %.4f (%.1f%% error)",
                     row["axle"], row["truth"], row["initial_guess"], row["converged"],
                     row["error_pct"])

        self._stage = "horizon-mse"
        model = AugmentedModel(params, geom, terrain, coeffs, est_cfg.dt)
        try:
            rows = horizon_rows(trace, profile, model, est, cfg.scenario.horizon_stride)
        except NumericalError as e:
            log.warning("Horizon MSE skipped: %s", e)
            rows = []
        if rows:
            write_csv(os.path.join(run_dir, "horizon_mse.csv"), "horizon_mse", rows)
            manifest.add_artifact("horizon_mse.csv", "horizon_mse")
        for name in ("estimation", "summary"):
            manifest.add_artifact(f"{name}.csv", name)
        return self._finish_run(manifest)

    # ── runs ─────────────────────────────────────────────────────────────────

    def _cmd_runs(self, args, cfg: RunConfig) -> int:
        runs = list_recent_runs(runs_base_for(args.out), max_results=args.limit)
        if not runs:
            print(f"No runs under {runs_base_for(args.out)}")
        for r in runs:
            print(f"{r['name']:<40} {r['command']:<10} {r['terrain']:<12} {r['status']:<7} "
                  f"{r['age_str']}")
        return 0
