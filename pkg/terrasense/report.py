"""
report.py — TerraSense
Plot-ready series from a finished run directory, plus small gnuplot stubs:

    sweep      loops.csv          F_y against beta (oracle, base, surrogate), last period
    estimate   convergence.csv    n_f, n_r and their standard deviations over time
               trajectory.csv     true and estimated front-axle path
    calibrate  calibration_summary.json  usable fits per slip range and branch

Outputs depend only on the run's files, so rerunning rewrites identical bytes.
"""

from __future__ import annotations
import logging
import os
from typing import Dict, List

import numpy as np

from .config import load_config
from .constants import BRANCHES, LOGGER_NAME
from .errors import MissingArtifactError
from .runs import (
    CONFIG_COPY_NAME, atomic_write_text, load_manifest, read_csv, write_csv, write_json,
)

log = logging.getLogger(LOGGER_NAME)

REPORT_INPUTS: Dict[str, List[str]] = {
    "sweep": ["sweep_compare.csv", CONFIG_COPY_NAME],
    "estimate": ["estimation.csv", "plant.csv"],
    "calibrate": ["calibration.csv"],
}

_GNUPLOT = {
    "loops": (
        "set datafile separator ','\nset xlabel 'beta [rad]'\nset ylabel 'F_y [N]'\n"
        "plot 'loops.csv' skip 2 using 1:2 with lines title 'SCM', \\\n"
        "     '' skip 2 using 1:3 with lines title 'base', \\\n"
        "     '' skip 2 using 1:4 with lines title 'surrogate'\n"),
    "convergence": (
        "set datafile separator ','\nset xlabel 't [s]'\nset ylabel 'n'\n"
        "plot 'convergence.csv' skip 2 using 1:2 with lines title 'n_f', \\\n"
        "     '' skip 2 using 1:3 with lines title 'n_r'\n"),
    "trajectory": (
        "set datafile separator ','\nset size ratio -1\nset xlabel 'x [m]'\nset ylabel 'y [m]'\n"
        "plot 'trajectory.csv' skip 2 using 1:2 with lines title 'true', \\\n"
        "     '' skip 2 using 3:4 with lines title 'estimated'\n"),
}


def missing_inputs(run_dir: str, command: str) -> List[str]:
    return [f for f in REPORT_INPUTS.get(command, []) if not os.path.exists(os.path.join(run_dir, f))]


def _write_plot(run_dir: str, name: str, rows) -> List[str]:
    write_csv(os.path.join(run_dir, f"{name}.csv"), name, rows)
    atomic_write_text(os.path.join(run_dir, f"{name}.gp"), _GNUPLOT[name])
    return [f"{name}.csv", f"{name}.gp"]


def sweep_report(run_dir: str) -> List[str]:
    table = read_csv(os.path.join(run_dir, "sweep_compare.csv"), expect="sweep_compare")
    cfg = load_config(os.path.join(run_dir, CONFIG_COPY_NAME))
    t = table.column("t")
    period = 1.0 / cfg.sweep.frequency
    keep = t >= t[-1] - period if t.size else np.zeros(0, dtype=bool)
    rows = np.column_stack([table.column(c)[keep]
                            for c in ("beta", "Fy_scm", "Fy_base", "Fy_surrogate")])
    return _write_plot(run_dir, "loops", rows)


def estimation_report(run_dir: str) -> List[str]:
    est = read_csv(os.path.join(run_dir, "estimation.csv"), expect="estimation")
    plant = read_csv(os.path.join(run_dir, "plant.csv"), expect="plant")
    t = est.column("t")
    conv = np.column_stack([t, est.column("zhat_n_f"), est.column("zhat_n_r"),
                            np.sqrt(np.maximum(est.column("P_n_f"), 0.0)),
                            np.sqrt(np.maximum(est.column("P_n_r"), 0.0))])
    tp = plant.column("t")
    traj = np.column_stack([np.interp(t, tp, plant.column("x")), np.interp(t, tp, plant.column("y")),
                            est.column("zhat_x"), est.column("zhat_y")])
    return _write_plot(run_dir, "convergence", conv) + _write_plot(run_dir, "trajectory", traj)


def calibration_report(run_dir: str) -> List[str]:
    table = read_csv(os.path.join(run_dir, "calibration.csv"), expect="calibration")
    ranges = table.column("slip_range").astype(int)
    ok = table.column("ok").astype(bool)
    branches = [r[table.columns.index("branch")] for r in table.rows]
    summary = {}
    for r in sorted(set(ranges.tolist())):
        for b in BRANCHES:
            sel = (ranges == r) & np.array([x == b for x in branches], dtype=bool)
            summary[f"{r}/{b}"] = {"sweeps": int(sel.sum()), "usable": int((sel & ok).sum())}
    if os.path.exists(os.path.join(run_dir, "validation.csv")):
        val = read_csv(os.path.join(run_dir, "validation.csv"), expect="validation")
        for key in ("rel_rms_surrogate", "rel_rms_base"):
            col = val.column(key)
            col = col[np.isfinite(col)]
            summary[key] = float(np.sqrt(np.mean(col ** 2))) if col.size else None
    write_json(os.path.join(run_dir, "calibration_summary.json"), summary)
    return ["calibration_summary.json"]


_REPORTS = {
    "sweep": sweep_report,
    "estimate": estimation_report,
    "calibrate": calibration_report,
}


def build_report(run_dir: str) -> List[str]:
    """Write the plot data for a run directory; returns the files written."""
    manifest = load_manifest(run_dir)
    if manifest.command not in _REPORTS:
        raise MissingArtifactError(f"no report for {manifest.command!r} runs")
    missing = missing_inputs(run_dir, manifest.command)
    if missing:
        raise MissingArtifactError(f"{run_dir} is missing report inputs: {', '.join(missing)}")
    written = _REPORTS[manifest.command](run_dir)
    log.info("Report for %s: %s", run_dir, ", ".join(written))
    return written


class ReportMixin:
    def _cmd_report(self, args, cfg) -> int:
        self._stage = "report"
        for f in build_report(args.run_dir):
            print(os.path.join(args.run_dir, f))
        return 0
