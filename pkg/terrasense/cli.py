# TerraSense — Command-line app
# python -m terrasense <command> [--config FILE] [--seed N] [--out DIR] [--desk-scale] [--verbose]
#
#   sweep      single-wheel test bed: oracle, base model and surrogate on one steering sweep
#   calibrate  fit the correction functions against the oracle and validate them
#   estimate   plant + unscented filter scenario with convergence and prediction reports
#   report     plot-ready series for a finished run directory
#   runs       list recent run directories

from __future__ import annotations
import argparse
import logging
import sys
from typing import List, Optional

from .commands import CommandsMixin
from .config import RunConfig, config_summary, default_config, load_config
from .constants import LOGGER_NAME, TOOL_ID
from .errors import TerraSenseError
from .report import ReportMixin
from .runs import RunManifest, copy_config, create_run_dir, runs_base_for, save_manifest

log = logging.getLogger(LOGGER_NAME)

COMMANDS = ("sweep", "calibrate", "estimate", "report", "runs")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="", help="INI config file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, default=0, help="Seed for sensor noise")
    common.add_argument("--out", default="", help="Base directory for run folders (default: ./runs)")
    common.add_argument("--desk-scale", action="store_true",
                        help="Use the reduced calibration grid regardless of [design] scale")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(prog=TOOL_ID, description="Terramechanics surrogate, "
                                     "grid oracle and sinkage-exponent estimation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("sweep", "Run the single-wheel steering sweep"),
                           ("calibrate", "Calibrate the correction functions"),
                           ("estimate", "Run an estimation scenario")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name != "calibrate":
            p.add_argument("--coefficients", default="", help="Coefficient file to use")
    p = sub.add_parser("report", parents=[common], help="Write plot data for a run directory")
    p.add_argument("run_dir", help="Run directory produced by sweep, calibrate or estimate")
    p = sub.add_parser("runs", parents=[common], help="List recent run directories")
    p.add_argument("--limit", type=int, default=10)
    return parser


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
                        datefmt="%H:%M:%S")


class TerraSenseApp(CommandsMixin, ReportMixin):
    def __init__(self):
        self._stage = ""
        self._manifest: Optional[RunManifest] = None

    # ── Run bookkeeping ──────────────────────────────────────────────────────

    def _start_run(self, args, cfg: RunConfig, command: str, terrain: str):
        run_dir = create_run_dir(f"{command}-{terrain}", runs_base_for(args.out))
        copy_config(args.config, run_dir, cfg.text)
        manifest = RunManifest(command=command, config_path=args.config, seed=args.seed,
                               out_dir=run_dir, terrain=terrain)
        save_manifest(manifest)
        self._manifest = manifest
        return manifest, run_dir

    def _finish_run(self, manifest: RunManifest) -> int:
        manifest.status = "ok"
        save_manifest(manifest)
        log.info("Run complete: %s", manifest.out_dir)
        return 0

    def _fail_run(self, err: Exception) -> None:
        if self._manifest is None:
            return
        self._manifest.status = "failed"
        self._manifest.error = str(err)
        try:
            save_manifest(self._manifest)
        except OSError as e:
            log.warning("Could not update manifest after failure: %s", e)

    # ── Dispatch ─────────────────────────────────────────────────────────────

    def run(self, args: argparse.Namespace) -> int:
        try:
            cfg = load_config(args.config) if args.config else default_config()
            for line in config_summary(cfg):
                log.debug("config %s", line)
            return getattr(self, f"_cmd_{args.command}")(args, cfg)
        except TerraSenseError as e:
            if self._stage and not e.stage:
                e.with_stage(self._stage)
            log.error("%s", e)
            self._fail_run(e)
            return e.exit_code
        except KeyboardInterrupt:
            self._fail_run(RuntimeError("interrupted"))
            raise


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    return TerraSenseApp().run(args)


if __name__ == "__main__":
    sys.exit(main())
