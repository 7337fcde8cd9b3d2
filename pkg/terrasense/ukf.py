"""
ukf.py — TerraSense
Additive-noise unscented Kalman filter: scaled sigma points with a symmetric
matrix square root, time and measurement updates, and a small stepping
wrapper that records timing and guards against divergence.
"""

from __future__ import annotations
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints, unscented_transform
from scipy import linalg

from .constants import LOGGER_NAME, SENSOR_SIGMAS
from .errors import DomainError, FilterError

log = logging.getLogger(LOGGER_NAME)

JITTER = 1e-9
NEG_EIG_TOL = 1e-9
DIVERGENCE_TRACE = 1e6

ModelFn = Callable[[np.ndarray], np.ndarray]


def default_q() -> np.ndarray:
    return np.diag([1e-4, 1e-4, 1e-5, 1e-3, 1e-3, 1e-3, 1e-6, 1e-6])


def default_r() -> np.ndarray:
    return np.diag(np.square(SENSOR_SIGMAS))


def default_p0(n_var: float = 0.04) -> np.ndarray:
    return np.diag(list(np.square(SENSOR_SIGMAS)) + [n_var, n_var])


def _check_psd(name: str, M: np.ndarray, dim: int) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (dim, dim):
        raise DomainError(f"{name} must be {dim}x{dim}, got {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise DomainError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() < -1e-12:
        raise DomainError(f"{name} must be positive semidefinite")
    return M


@dataclass(frozen=True)
class UkfConfig:
    alpha: float = 0.1                     # sigma-point spread
    kappa: float = 0.0                     # secondary scaling
    zeta: float = 2.0                      # prior distribution parameter, 2 for Gaussian
    Q: np.ndarray = field(default_factory=default_q)
    R: np.ndarray = field(default_factory=default_r)
    P0: np.ndarray = field(default_factory=default_p0)

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must be in (0, 1], got {self.alpha}")
        L = np.shape(self.Q)[0]
        object.__setattr__(self, "Q", _check_psd("Q", self.Q, L))
        object.__setattr__(self, "P0", _check_psd("P0", self.P0, L))
        object.__setattr__(self, "R", _check_psd("R", self.R, np.shape(self.R)[0]))

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def lam(self, L: int) -> float:
        return self.alpha ** 2 * (L + self.kappa) - L


# ── Sigma points ──────────────────────────────────────────────────────────────

def _points_for(L: int, cfg: UkfConfig) -> MerweScaledSigmaPoints:
    if L < 1:
        raise DomainError("state dimension must be >= 1")
    if cfg.alpha ** 2 * (L + cfg.kappa) == 0:
        raise DomainError("L + lambda is zero; choose kappa != -L")
    return MerweScaledSigmaPoints(L, alpha=cfg.alpha, beta=cfg.zeta, kappa=cfg.kappa,
                                  sqrt_method=symmetric_sqrt)


def ukf_weights(L: int, cfg: UkfConfig) -> Tuple[np.ndarray, np.ndarray]:
    """(W^m, W^c) for 2L + 1 sigma points."""
    pts = _points_for(L, cfg)
    return pts.Wm.copy(), pts.Wc.copy()


def symmetric_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root S (S @ S = M) via eigh, with one jitter retry."""
    M = 0.5 * (M + M.T)
    for attempt in range(2):
        w, V = np.linalg.eigh(M)
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        if w.min(initial=0.0) >= -NEG_EIG_TOL * scale:
            return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        if attempt == 0:
            log.debug("Covariance square root: min eigenvalue %.3g, retrying with jitter", w.min())
            M = M + JITTER * np.eye(M.shape[0])
    raise FilterError(f"covariance is indefinite (min eigenvalue {w.min():.3g}) after jitter",
                      diagnostics={"eigenvalues": w.tolist()})


def sigma_points(z_hat: np.ndarray, P: np.ndarray, cfg: UkfConfig) -> np.ndarray:
    """The 2L + 1 points z_hat and z_hat +/- columns of sqrt((L + lambda) P)."""
    z_hat = np.asarray(z_hat, dtype=float)
    return _points_for(z_hat.size, cfg).sigma_points(z_hat, np.asarray(P, dtype=float))


# ── Updates ───────────────────────────────────────────────────────────────────

@dataclass
class Prediction:
    points: np.ndarray                     # propagated sigma points (2L+1, L)
    z_pred: np.ndarray
    P_pred: np.ndarray
    Y: np.ndarray                          # predicted observations (2L+1, m)
    y_pred: np.ndarray


def observe_states(X: np.ndarray, m: int = 6) -> np.ndarray:
    """Observation map: the leading m state components."""
    return X[..., :m]


def time_update(points: np.ndarray, Wm: np.ndarray, Wc: np.ndarray, model: ModelFn,
                Q: np.ndarray, observe: Callable[[np.ndarray], np.ndarray] = observe_states
                ) -> Prediction:
    """Propagate every sigma point, then form the predicted mean and covariance."""
    try:
        X = np.asarray(model(points), dtype=float)
    except DomainError as e:
        bad = _first_failing_point(points, model)
        raise FilterError(f"prediction model failed on sigma point {bad}: {e}",
                          diagnostics={"point": bad, "values": points[bad].tolist()}) from e
    finite = np.all(np.isfinite(X), axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FilterError(f"prediction model returned non-finite values for sigma point {bad}",
                          diagnostics={"point": bad, "values": points[bad].tolist()})
    z_pred, P_pred = unscented_transform(X, Wm, Wc, Q)
    Y = observe(X)
    y_pred = Wm @ Y
    return Prediction(points=X, z_pred=z_pred, P_pred=0.5 * (P_pred + P_pred.T), Y=Y,
                      y_pred=y_pred)


def _first_failing_point(points: np.ndarray, model: ModelFn) -> int:
    for i in range(points.shape[0]):
        try:
            model(points[i:i + 1])
        except DomainError:
            return i
    return -1


def measurement_update(pred: Prediction, y: np.ndarray, Wc: np.ndarray, R: np.ndarray
                       ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (z, P, innovation)."""
    dY = pred.Y - pred.y_pred
    dX = pred.points - pred.z_pred
    P_yy = (dY.T * Wc) @ dY + R
    P_zy = (dX.T * Wc) @ dY
    try:
        K = linalg.solve(P_yy, P_zy.T, assume_a="sym").T
    except (linalg.LinAlgError, ValueError) as e:
        raise FilterError(f"innovation covariance is singular: {e}",
                          diagnostics={"P_yy": P_yy.tolist()}) from e
    innov = np.asarray(y, dtype=float) - pred.y_pred
    z = pred.z_pred + K @ innov
    P = pred.P_pred - K @ P_yy @ K.T
    return z, 0.5 * (P + P.T), innov


# ── Filter wrapper ────────────────────────────────────────────────────────────

@dataclass
class FilterState:
    z_hat: np.ndarray
    P: np.ndarray
    step: int = 0
    wall_times: List[float] = field(default_factory=list)
    last_innovation: Optional[np.ndarray] = None


class UnscentedFilter:
    """Steps a FilterState with a batched prediction model."""

    def __init__(self, cfg: UkfConfig, model: ModelFn, z0: np.ndarray,
                 P0: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.model = model
        self.Wm, self.Wc = ukf_weights(cfg.dim, cfg)
        P = cfg.P0 if P0 is None else P0
        self.state = FilterState(z_hat=np.asarray(z0, dtype=float).copy(), P=np.array(P, dtype=float))

    def step(self, y: Optional[np.ndarray] = None) -> FilterState:
        """One time update, plus a measurement update when y is given."""
        st = self.state
        t0 = time.perf_counter()
        pts = sigma_points(st.z_hat, st.P, self.cfg)
        pred = time_update(pts, self.Wm, self.Wc, self.model, self.cfg.Q)
        if y is None:
            z, P, innov = pred.z_pred, pred.P_pred, None
        else:
            z, P, innov = measurement_update(pred, y, self.Wc, self.cfg.R)
        st.wall_times.append(time.perf_counter() - t0)
        st.step += 1
        st.z_hat, st.P, st.last_innovation = z, P, innov
        trace = float(np.trace(P))
        if not np.isfinite(trace) or trace > DIVERGENCE_TRACE:
            raise FilterError(f"filter diverged at step {st.step} (trace P = {trace:.3g})",
                              diagnostics={"step": st.step, "z_hat": z.tolist(),
                                           "P_diag": np.diag(P).tolist()})
        return st
