"""
estimator.py — TerraSense
Joint state and sinkage-exponent estimation: the augmented bicycle model
(vehicle states plus front/rear n with trivial dynamics), the estimation
run over a plant trace, open-loop horizon prediction and the summary and
prediction-error reports.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coeffs import GFunCoeffs
from .constants import (
    ESTIMATOR_DT, LOGGER_NAME, PREDICTION_HORIZONS,
)
from .errors import ConfigError, DomainError, FilterError
from .plant import PlantTrace
from .surrogate import surrogate_lateral_force_batch
from .terrain import TerrainParams, WheelGeometry
from .ukf import UkfConfig, UnscentedFilter
from .vehicle import DriveProfile, VehicleParams, VehicleState, axle_states, bicycle_rhs

log = logging.getLogger(LOGGER_NAME)

AX_SOURCES = ("measured", "command")
N_SOFT_BOUNDS = (0.0, 2.0)


@dataclass(frozen=True)
class AugmentedState:
    z_b: VehicleState
    n_f: float
    n_r: float

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.z_b.to_array(), [self.n_f, self.n_r]])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "AugmentedState":
        return cls(z_b=VehicleState.from_array(a[:6]), n_f=float(a[6]), n_r=float(a[7]))


# ── Prediction model ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class StepInputs:
    """Inputs held over one estimator step."""
    delta: float
    a_x: float
    wheel_omega: float
    delta_step: float                      # steering change over the previous step


class AugmentedModel:
    """Forward-Euler bicycle model with surrogate tire forces, batched over rows of X (N, 8)."""

    def __init__(self, params: VehicleParams, geom: WheelGeometry, terrain: TerrainParams,
                 coeffs: GFunCoeffs, dt: float = ESTIMATOR_DT):
        self.params, self.geom, self.terrain, self.coeffs, self.dt = params, geom, terrain, coeffs, dt

    def lateral_forces(self, X: np.ndarray, inp: StepInputs) -> Tuple[np.ndarray, np.ndarray]:
        ax = axle_states(X[:, :6], inp.delta, inp.wheel_omega, self.geom, self.params,
                         delta_step=inp.delta_step, step_dt=self.dt)
        F_y, _ = surrogate_lateral_force_batch(ax.W, ax.s, ax.beta, ax.v, ax.delta_step,
                                               X[:, 6:8], self.geom, self.terrain, self.coeffs)
        F_y = F_y.reshape(X.shape[0], 2) * self.params.wheels_per_axle
        return F_y[:, 0], F_y[:, 1]

    def propagate(self, X: np.ndarray, inp: StepInputs) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F_yf, F_yr = self.lateral_forces(X, inp)
        out = X.copy()
        out[:, :6] += self.dt * bicycle_rhs(X[:, :6], inp.delta, inp.a_x, F_yf, F_yr, self.params)
        return out


def step_inputs(profile: DriveProfile, geom: WheelGeometry, t: float, dt: float = ESTIMATOR_DT,
                a_x: Optional[float] = None) -> StepInputs:
    inp = profile.inputs(t, geom)
    return StepInputs(delta=inp.delta, a_x=inp.a_x if a_x is None else a_x,
                      wheel_omega=inp.wheel_omega,
                      delta_step=float(profile.steer(t) - profile.steer(t - dt)))


# ── Estimation run ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class EstimatorConfig:
    dt: float = ESTIMATOR_DT               # s
    n_f0: float = 0.7                      # initial guesses
    n_r0: float = 0.7
    ax_source: str = "command"             # command | measured
    ukf: UkfConfig = field(default_factory=UkfConfig)
    last_window: float = 2.0               # s, secondary convergence report

    def __post_init__(self):
        if self.ax_source not in AX_SOURCES:
            raise ConfigError(f"ax_source must be one of {AX_SOURCES}, got {self.ax_source!r}")
        if not self.dt > 0:
            raise ConfigError("estimator dt must be > 0")
        if self.ukf.dim != 8:
            raise ConfigError(f"augmented state has 8 components; UKF matrices are {self.ukf.dim}x{self.ukf.dim}")


@dataclass
class EstimationTrace:
    t: np.ndarray
    z_hat: np.ndarray                      # (K, 8)
    P_diag: np.ndarray                     # (K, 8)
    innovation: np.ndarray                 # (K, 6), nan without a measurement
    wall_time: np.ndarray                  # (K,)
    n_initial: Tuple[float, float]
    n_true: Tuple[float, float] = (math.nan, math.nan)
    min_eig: float = 0.0                   # smallest covariance eigenvalue seen

    @property
    def n_final(self) -> Tuple[float, float]:
        return float(self.z_hat[-1, 6]), float(self.z_hat[-1, 7])

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.z_hat, self.P_diag, self.innovation, self.wall_time])

    def convergence_rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.z_hat[:, 6:8], np.sqrt(np.maximum(self.P_diag[:, 6:8], 0))])


def run_estimation(trace: PlantTrace, profile: DriveProfile, params: VehicleParams,
                   geom: WheelGeometry, terrain: TerrainParams, coeffs: GFunCoeffs,
                   cfg: EstimatorConfig = EstimatorConfig(),
                   duration: Optional[float] = None) -> EstimationTrace:
    """Step the filter at cfg.dt over the trace, updating on measurement ticks only."""
    model = AugmentedModel(params, geom, terrain, coeffs, cfg.dt)
    y0 = trace.measurement_at(0.0)
    if y0 is None:
        raise DomainError("plant trace has no measurement at t=0")
    z0 = np.concatenate([y0, [cfg.n_f0, cfg.n_r0]])
    t_end = float(trace.t[-1]) if duration is None else min(duration, float(trace.t[-1]))
    n_steps = int(math.floor(t_end / cfg.dt + 1e-9))

    holder: Dict[str, StepInputs] = {}
    ukf = UnscentedFilter(cfg.ukf, lambda X: model.propagate(X, holder["inp"]), z0)
    ts = [0.0]
    zs = [z0.copy()]
    Ps = [np.diag(ukf.state.P).copy()]
    innovs = [np.full(6, np.nan)]
    walls = [0.0]
    min_eig = float(np.linalg.eigvalsh(ukf.state.P).min())
    u_hist: List[Tuple[float, float]] = [(0.0, float(y0[3]))]
    a_meas = 0.0
    warned = False

    for k in range(1, n_steps + 1):
        t_prev, t_k = (k - 1) * cfg.dt, k * cfg.dt
        a_cmd = None if cfg.ax_source == "command" else a_meas
        holder["inp"] = step_inputs(profile, geom, t_prev, cfg.dt, a_cmd)
        y = trace.measurement_at(t_k)
        try:
            st = ukf.step(y)
        except FilterError as e:
            e.diagnostics = {"t": t_k, "detail": e.diagnostics,
                             "z_hat_history": [z.tolist() for z in zs[-5:]]}
            e.partial = EstimationTrace(t=np.array(ts), z_hat=np.array(zs), P_diag=np.array(Ps),
                                        innovation=np.array(innovs), wall_time=np.array(walls),
                                        n_initial=(cfg.n_f0, cfg.n_r0),
                                        n_true=tuple(trace.n_true), min_eig=min_eig)
            raise
        if y is not None and cfg.ax_source == "measured":
            u_hist.append((t_k, float(st.z_hat[3])))
            a_meas = _low_pass_accel(u_hist)
        n_est = st.z_hat[6:8]
        if not warned and (np.any(n_est <= N_SOFT_BOUNDS[0]) or np.any(n_est >= N_SOFT_BOUNDS[1])):
            log.warning("Sinkage exponent estimate %s left the soft bounds %s at t=%.2f s",
                        np.round(n_est, 4).tolist(), N_SOFT_BOUNDS, t_k)
            warned = True
        ts.append(t_k)
        zs.append(st.z_hat.copy())
        Ps.append(np.diag(st.P).copy())
        innovs.append(st.last_innovation if st.last_innovation is not None else np.full(6, np.nan))
        walls.append(st.wall_times[-1])
        min_eig = min(min_eig, float(np.linalg.eigvalsh(st.P).min()))

    out = EstimationTrace(t=np.array(ts), z_hat=np.array(zs), P_diag=np.array(Ps),
                          innovation=np.array(innovs), wall_time=np.array(walls),
                          n_initial=(cfg.n_f0, cfg.n_r0), n_true=tuple(trace.n_true),
                          min_eig=min_eig)
    log.info("Estimation finished at t=%.2f s: n_f=%.4f n_r=%.4f (p99 step %.2f ms)",
             ts[-1], out.n_final[0], out.n_final[1], 1e3 * float(np.percentile(walls[1:] or [0], 99)))
    return out


def _low_pass_accel(u_hist: List[Tuple[float, float]]) -> float:
    """Mean of the last two finite differences of the posterior u."""
    if len(u_hist) < 2:
        return 0.0
    diffs = [(u1 - u0) / (t1 - t0) for (t0, u0), (t1, u1) in zip(u_hist[-3:-1], u_hist[-2:])]
    return float(np.mean(diffs))


# ── Reports ───────────────────────────────────────────────────────────────────

def time_within(t: np.ndarray, series: np.ndarray, target: float, rel: float = 0.10) -> float:
    """First time after which the series stays within rel of target (nan if never)."""
    outside = np.abs(series - target) > rel * abs(target)
    if not outside.any():
        return float(t[0])
    last = int(np.flatnonzero(outside)[-1])
    return float(t[last + 1]) if last + 1 < t.size else math.nan


def convergence_summary(est: EstimationTrace, last_window: float = 2.0) -> List[dict]:
    rows = []
    tail = est.t >= est.t[-1] - last_window
    for i, axle in enumerate(("front", "rear")):
        series = est.z_hat[:, 6 + i]
        final = float(series[-1])
        truth = float(est.n_true[i])
        err = abs(final - truth) / abs(truth) * 100.0 if truth else math.nan
        rows.append({
            "axle": axle, "truth": truth, "initial_guess": float(est.n_initial[i]),
            "converged": final, "last2s_mean": float(series[tail].mean()),
            "error_pct": err, "t_within_10pct": time_within(est.t, series, final),
        })
    return rows


def predict_horizon(z_hat: AugmentedState, t0: float, profile: DriveProfile, horizon: float,
                    model: AugmentedModel) -> np.ndarray:
    """Open-loop rollout with n held fixed; returns vehicle states (K + 1, 6) at model.dt."""
    if horizon < 0:
        raise DomainError("horizon must be >= 0")
    X = z_hat.to_array()[None, :]
    steps = int(round(horizon / model.dt))
    out = [X[0, :6].copy()]
    for k in range(steps):
        X = model.propagate(X, step_inputs(profile, model.geom, t0 + k * model.dt, model.dt))
        out.append(X[0, :6].copy())
    return np.array(out)


def horizon_mse(trace: PlantTrace, profile: DriveProfile, model: AugmentedModel,
                n_pair: Tuple[float, float], horizons: Sequence[float] = PREDICTION_HORIZONS,
                stride: float = 0.5, t_start: float = 0.0) -> Dict[float, np.ndarray]:
    """Per-channel MSE of predictions restarted from the true state every `stride` seconds."""
    t_end = float(trace.t[-1])
    h_max = max(horizons)
    starts = np.arange(t_start, t_end - h_max + 1e-9, stride)
    if starts.size == 0:
        raise DomainError(f"trace of {t_end:.1f} s is too short for a {h_max:.1f} s horizon")
    errs: Dict[float, List[np.ndarray]] = {h: [] for h in horizons}
    for t0 in starts:
        z0 = AugmentedState(VehicleState.from_array(trace.state_at(t0)), *n_pair)
        pred = predict_horizon(z0, t0, profile, h_max, model)
        for h in horizons:
            k = int(round(h / model.dt))
            errs[h].append(pred[k] - trace.state_at(t0 + k * model.dt))
    return {h: np.mean(np.square(np.array(e)), axis=0) for h, e in errs.items()}


def horizon_rows(trace: PlantTrace, profile: DriveProfile, model: AugmentedModel,
                 est: EstimationTrace, stride: float = 0.5) -> List[list]:
    """Rows of the horizon-MSE table for the converged and the initial-guess exponents."""
    rows = []
    for source, pair in (("converged", est.n_final), ("initial_guess", est.n_initial)):
        mse = horizon_mse(trace, profile, model, pair, stride=stride)
        for h in PREDICTION_HORIZONS:
            rows.append([h, source, pair[0], pair[1]] + mse[h].tolist())
    return rows

