# TerraSense — shared constants
# Timing, design bounds, sensor noise, CSV schemas and exit codes.

from __future__ import annotations
from typing import Dict, Tuple

TOOL_ID = "terrasense"
LOGGER_NAME = "terrasense"

GRAVITY = 9.81                     # m/s^2

# ── Wheel defaults ────────────────────────────────────────────────────────────

DEFAULT_WHEEL_RADIUS = 0.45        # m
DEFAULT_WHEEL_WIDTH = 0.25         # m
DEFAULT_A0 = 0.4
DEFAULT_A1 = 0.15
DEFAULT_LAMBDA_RATIO = 0.0

# ── Timing (s) ────────────────────────────────────────────────────────────────

PLANT_DT = 0.002
ESTIMATOR_DT = 0.012
MEASUREMENT_DT = 0.024
PREDICTION_HORIZONS = (0.5, 2.5, 5.0)

# ── Design box for the correction functions ───────────────────────────────────

LOAD_BOUNDS = (1000.0, 4000.0)     # N
SLIP_BOUNDS = (-0.9, 0.9)
SPEED_BOUNDS = (2.5, 8.5)          # m/s
EXPONENT_BOUNDS = (0.4, 1.3)

DESIGN_BOUNDS: Dict[str, Tuple[float, float]] = {
    "Fz": LOAD_BOUNDS,
    "s":  SLIP_BOUNDS,
    "v":  SPEED_BOUNDS,
    "n":  EXPONENT_BOUNDS,
}

# Slip ranges: id -> (low, high, low_closed, high_closed)
SLIP_RANGES: Dict[int, Tuple[float, float, bool, bool]] = {
    1: (0.16, 1.0, True, True),
    2: (0.0, 0.16, True, False),
    3: (-0.157, 0.0, False, False),
    4: (-1.0, -0.157, True, True),
}

BRANCH_LOWER = "lower"
BRANCH_UPPER = "upper"
BRANCHES = (BRANCH_LOWER, BRANCH_UPPER)

# ── Sensors ───────────────────────────────────────────────────────────────────

STATE_NAMES = ("x", "y", "psi", "u", "v", "omega_z")
SENSOR_SIGMAS = (1.2, 1.2, 0.0175, 0.25, 0.25, 0.0175)

# ── Sinkage solver ────────────────────────────────────────────────────────────

NEWTON_MAX_ITER = 50
NEWTON_FD_STEP = 1e-6              # m
NEWTON_STEP_TOL = 1e-7             # m
BRACKET_FRACTION = 0.9             # bisection fallback bracket is [0, 0.9 r]

# ── CSV schemas (name -> (version, columns)) ──────────────────────────────────

CSV_SCHEMAS: Dict[str, Tuple[int, Tuple[str, ...]]] = {
    "sweep": (1, ("t", "W", "s", "beta", "v", "Fz", "Fy", "h_max", "b_eff")),
    "sweep_compare": (1, ("t", "beta", "delta_step", "Fy_scm", "Fy_base", "Fy_surrogate")),
    "plant": (1, ("t",) + STATE_NAMES + ("delta", "a_x", "wheel_omega", "Fy_f", "Fy_r")),
    "measurements": (1, ("t",) + tuple(f"meas_{n}" for n in STATE_NAMES)),
    "estimation": (1, ("t",)
                   + tuple(f"zhat_{n}" for n in STATE_NAMES + ("n_f", "n_r"))
                   + tuple(f"P_{n}" for n in STATE_NAMES + ("n_f", "n_r"))
                   + tuple(f"innov_{n}" for n in STATE_NAMES)
                   + ("wall_time",)),
    "summary": (1, ("axle", "truth", "initial_guess", "converged", "last2s_mean",
                    "error_pct", "t_within_10pct")),
    "horizon_mse": (1, ("horizon", "source", "n_f", "n_r")
                    + tuple(f"mse_{n}" for n in STATE_NAMES)),
    "calibration": (1, ("slip_range", "branch", "W", "s", "v", "n",
                        "g1", "g2", "g3", "residual", "ok")),
    "validation": (1, ("W", "s", "v", "n", "peak_fy", "rms_surrogate", "rms_base",
                       "rel_rms_surrogate", "rel_rms_base", "surrogate_us")),
    "loops": (1, ("beta", "Fy_scm", "Fy_base", "Fy_surrogate")),
    "convergence": (1, ("t", "n_f", "n_r", "sd_n_f", "sd_n_r")),
    "trajectory": (1, ("x_true", "y_true", "x_est", "y_est")),
}

# ── Exit codes ────────────────────────────────────────────────────────────────

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
