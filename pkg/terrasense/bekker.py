"""
bekker.py — TerraSense
Classical Bekker wheel model: static sinkage, Newton sinkage balancing the
wheel load, and the base lateral force integral.

Sign convention: the lateral force carries the sign of the side slip angle
beta (wheel heading minus wheel velocity direction), i.e. the soil pushes
back against the wheel's lateral sliding.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import optimize

from .constants import (
    BRACKET_FRACTION, LOGGER_NAME, NEWTON_FD_STEP, NEWTON_MAX_ITER, NEWTON_STEP_TOL,
)
from .errors import ContactGeometryError, DomainError, SinkageError
from .quadrature import gauss_arc_nodes, integrate_arc
from .terrain import (
    TerrainParams, TireForces, WheelGeometry, WheelState,
    _contact_angles, _lateral_shear_displacement, _pressure, _shear_displacement,
    _shear_shape, _shear_strength, _sinkage_profile, contact_angles, stress_profiles,
)

log = logging.getLogger(LOGGER_NAME)

INTEGRATORS = ("adaptive", "gauss", "quadratic")


@dataclass(frozen=True)
class SinkageSolution:
    h: float                               # converged maximum sinkage, m
    iterations: int                        # Newton iterations taken
    residual: float                        # |F_z(h) - W|, N
    F_z: float = 0.0                       # reaction at h, N
    method: str = "newton"                 # newton | bisection


def force_tolerance(W):
    return np.maximum(1.0, 1e-3 * np.asarray(W, dtype=float))


# ── Static sinkage ────────────────────────────────────────────────────────────

def static_sinkage(W: float, geom: WheelGeometry, terrain: TerrainParams) -> float:
    if not math.isfinite(W) or W < 0:
        raise DomainError(f"static_sinkage: load must be finite and >= 0, got {W}")
    if terrain.n >= 3:
        raise DomainError(f"static_sinkage: formula singular for n >= 3, got {terrain.n}")
    return float(_static_sinkage(W, terrain.n, geom, terrain))


def _static_sinkage(W, n, geom: WheelGeometry, terrain: TerrainParams):
    k_eq = terrain.k_c / geom.b + terrain.k_phi
    base = 3.0 * W / (geom.b * (3.0 - n) * k_eq * math.sqrt(2.0 * geom.r))
    return np.power(base, 2.0 / (2.0 * n + 1.0))


# ── Normal force ──────────────────────────────────────────────────────────────

def normal_force(h: float, s: float, geom: WheelGeometry, terrain: TerrainParams,
                 integrator: str = "adaptive") -> float:
    """F_z = integral of r b (tau sin(theta) + sigma cos(theta)) over the contact arc."""
    if h == 0:
        return 0.0
    cg = contact_angles(h, s, geom, terrain)

    def integrand(theta):
        sigma, tau = stress_profiles(theta, s, cg, geom, terrain)
        return geom.r * geom.b * (tau * np.sin(theta) + sigma * np.cos(theta))

    return integrate_arc(integrand, cg, integrator)


def normal_force_batch(h, s, n, geom: WheelGeometry, terrain: TerrainParams) -> np.ndarray:
    """Gauss-Legendre F_z for arrays of sinkage, slip and sinkage exponent."""
    h, s, n = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(s, dtype=float),
                                  np.asarray(n, dtype=float))
    r, b = geom.r, geom.b
    th_f, th_m, th_r = _contact_angles(h, s, r, terrain.a0, terrain.a1, terrain.lambda_ratio)
    theta, w = gauss_arc_nodes(th_r, th_m, th_f)
    th_f, th_m, th_r = th_f[..., None], th_m[..., None], th_r[..., None]
    sink = _sinkage_profile(theta, th_f, th_m, th_r, r)
    sigma = _pressure(sink, b, terrain.k_c, terrain.k_phi, n[..., None])
    j = _shear_displacement(theta, s[..., None], th_f, r)
    tau = _shear_strength(sigma, terrain.c, terrain.tan_phi) * np.sign(j) \
        * _shear_shape(np.abs(j), terrain.k, "exponential")
    return r * b * np.sum(w * (tau * np.sin(theta) + sigma * np.cos(theta)), axis=-1)


# ── Sinkage solver ────────────────────────────────────────────────────────────

ForceFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _newton(force: ForceFn, W: np.ndarray, h0: np.ndarray, r: float,
            max_iter: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched Newton on F(h) = W with a central-difference derivative.

    Returns (h, iterations, F(h), converged, last_iterate). An element stops
    once its residual is within tolerance and its next step is below
    NEWTON_STEP_TOL; elements that leave [0, r) or stall are marked failed.
    `force` receives the stacked (h, h - d, h + d) points and the active indices.
    """
    h = np.array(h0, dtype=float)
    tol = force_tolerance(W)
    iters = np.zeros(h.shape, dtype=int)
    F_at = np.full(h.shape, np.nan)
    active = np.ones(h.shape, dtype=bool)
    converged = np.zeros(h.shape, dtype=bool)
    last = h.copy()
    delta = NEWTON_FD_STEP
    for it in range(max_iter + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        hk = h[idx]
        lo = np.where(hk > delta, hk - delta, hk)
        F_all = force(np.concatenate([hk, lo, hk + delta]), idx)
        F0, Fm, Fp = np.split(F_all, 3)
        dF = (Fp - Fm) / np.where(hk > delta, 2.0 * delta, delta)
        f = F0 - W[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / dF
        F_at[idx] = F0
        iters[idx] = it
        done = (np.abs(f) <= tol[idx]) & (np.abs(step) < NEWTON_STEP_TOL)
        converged[idx[done]] = True
        active[idx[done]] = False
        if it == max_iter:
            break
        go = ~done
        h_new = hk[go] - step[go]
        bad = ~np.isfinite(h_new) | (h_new < 0) | (h_new >= r) | ~(dF[go] > 0)
        moving = idx[go]
        last[moving] = np.where(np.isfinite(h_new), h_new, hk[go])
        active[moving[bad]] = False
        h[moving[~bad]] = h_new[~bad]
    return h, iters, F_at, converged, last


def _bisect(force1: Callable[[float], float], W: float, r: float, last: float,
            xtol: float = 1e-12) -> Tuple[float, float]:
    hi = BRACKET_FRACTION * r
    F_hi = force1(hi)
    if not F_hi >= W:
        raise SinkageError(
            f"load {W:.6g} N exceeds the reaction at {BRACKET_FRACTION} r ({F_hi:.6g} N)",
            last_iterate=last)
    root = optimize.bisect(lambda h: force1(h) - W, 0.0, hi, xtol=xtol, maxiter=200)
    return float(root), float(force1(root))


def _check_wheel(wheel: WheelState) -> None:
    if not wheel.W > 0:
        raise DomainError(f"solve_sinkage: wheel load must be > 0, got {wheel.W}")


def solve_sinkage(wheel: WheelState, geom: WheelGeometry, terrain: TerrainParams,
                  integrator: str = "adaptive", h_init: Optional[float] = None,
                  max_iter: int = NEWTON_MAX_ITER) -> SinkageSolution:
    """Newton iteration from the static sinkage, bisection on [0, 0.9 r] as fallback."""
    _check_wheel(wheel)
    s = wheel.s

    def force1(h: float) -> float:
        return normal_force(h, s, geom, terrain, integrator)

    def force(hs: np.ndarray, _idx: np.ndarray) -> np.ndarray:
        return np.array([force1(float(h)) for h in hs])

    h0 = static_sinkage(wheel.W, geom, terrain) if h_init is None else float(h_init)
    if not 0 <= h0 < geom.r:
        h0 = min(max(h0, 0.0), BRACKET_FRACTION * geom.r)
    W = np.array([wheel.W])
    h, iters, F_at, ok, last = _newton(force, W, np.array([h0]), geom.r, max_iter)
    if ok[0]:
        return SinkageSolution(h=float(h[0]), iterations=int(iters[0]),
                               residual=float(abs(F_at[0] - wheel.W)), F_z=float(F_at[0]))
    log.debug("Newton sinkage failed at W=%.1f s=%.3f (last h=%.4g); bisecting",
              wheel.W, s, last[0])
    root, F_root = _bisect(force1, wheel.W, geom.r, float(last[0]))
    return SinkageSolution(h=root, iterations=int(iters[0]), residual=abs(F_root - wheel.W),
                           F_z=F_root, method="bisection")


def bisect_sinkage(wheel: WheelState, geom: WheelGeometry, terrain: TerrainParams,
                   integrator: str = "adaptive", xtol: float = 1e-12) -> float:
    """Bisection root of F_z(h) = W on [0, 0.9 r]; reference solution for the Newton solver."""
    _check_wheel(wheel)
    root, _ = _bisect(lambda h: normal_force(h, wheel.s, geom, terrain, integrator),
                      wheel.W, geom.r, float("nan"), xtol=xtol)
    return root


def solve_sinkage_batch(W, s, n, geom: WheelGeometry, terrain: TerrainParams,
                        max_iter: int = NEWTON_MAX_ITER) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized Gauss-Legendre sinkage for arrays of (W, s, n); returns (h, F_z)."""
    W, s, n = np.broadcast_arrays(np.asarray(W, dtype=float), np.asarray(s, dtype=float),
                                  np.asarray(n, dtype=float))
    W, s, n = W.ravel(), s.ravel(), n.ravel()
    if np.any(~(W > 0)):
        raise DomainError("solve_sinkage_batch: wheel loads must be > 0")
    if np.any(n <= 0) or np.any(n >= 3):
        raise DomainError("solve_sinkage_batch: sinkage exponents must be in (0, 3)")

    def force(hs: np.ndarray, idx: np.ndarray) -> np.ndarray:
        k = hs.size // idx.size
        return normal_force_batch(hs, np.tile(s[idx], k), np.tile(n[idx], k), geom, terrain)

    h0 = np.minimum(_static_sinkage(W, n, geom, terrain), BRACKET_FRACTION * geom.r)
    h, _iters, F_at, ok, last = _newton(force, W, h0, geom.r, max_iter)
    for i in np.flatnonzero(~ok):
        h[i], F_at[i] = _bisect(
            lambda x, i=i: float(normal_force_batch(x, s[i], n[i], geom, terrain)),
            float(W[i]), geom.r, float(last[i]))
    return h, F_at


def solve_sinkage_point(W: float, s: float, n: float, geom: WheelGeometry,
                        terrain: TerrainParams, max_iter: int = NEWTON_MAX_ITER
                        ) -> Tuple[float, float]:
    """Single-point solve_sinkage_batch without the batch bookkeeping; returns (h, F_z)."""
    if not W > 0:
        raise DomainError(f"solve_sinkage_point: wheel load must be > 0, got {W}")
    if not 0 < n < 3:
        raise DomainError(f"solve_sinkage_point: sinkage exponent must be in (0, 3), got {n}")
    r = geom.r
    tol = max(1.0, 1e-3 * W)
    delta = NEWTON_FD_STEP
    h = min(float(_static_sinkage(W, n, geom, terrain)), BRACKET_FRACTION * r)
    last = h
    for it in range(max_iter + 1):
        lo = h - delta if h > delta else h
        F0, Fm, Fp = normal_force_batch(np.array([h, lo, h + delta]), s, n, geom, terrain)
        dF = (Fp - Fm) / (2.0 * delta if h > delta else delta)
        f = F0 - W
        step = f / dF if dF > 0 else math.inf
        if abs(f) <= tol and abs(step) < NEWTON_STEP_TOL:
            return h, float(F0)
        if it == max_iter or dF <= 0:
            break
        h_new = h - step
        if not (math.isfinite(h_new) and 0 <= h_new < r):
            last = h_new if math.isfinite(h_new) else h
            break
        h = last = h_new
    return _bisect(lambda x: float(normal_force_batch(x, s, n, geom, terrain)), W, r, last)


# ── Lateral force ─────────────────────────────────────────────────────────────

def lateral_force_base(wheel: WheelState, geom: WheelGeometry, terrain: TerrainParams,
                       integrator: str = "adaptive") -> TireForces:
    """Base lateral force: integral of r b tau_y(theta) with k_y held at k.

    F_y takes the sign of beta on purpose: beta is heading minus velocity
    direction (see vehicle.wheel_slips), so the force opposes the lateral
    sliding. With beta measured as velocity minus heading the same force
    reads as "positive beta gives negative F_y".
    """
    if abs(wheel.beta) >= math.pi / 2:
        raise DomainError(f"side slip angle must satisfy |beta| < pi/2, got {wheel.beta}")
    sol = solve_sinkage(wheel, geom, terrain, integrator)
    if wheel.beta == 0:
        return TireForces(F_z=sol.F_z, F_y=0.0)
    try:
        cg = contact_angles(sol.h, wheel.s, geom, terrain)
    except ContactGeometryError as e:
        raise SinkageError(f"converged sinkage has invalid contact geometry: {e}",
                           last_iterate=sol.h) from e

    def integrand(theta):
        sink = _sinkage_profile(theta, cg.theta_f, cg.theta_m, cg.theta_r, geom.r)
        sigma = _pressure(sink, cg.b_eff, terrain.k_c, terrain.k_phi, terrain.n)
        j_y = _lateral_shear_displacement(theta, wheel.s, wheel.beta, cg.theta_f, geom.r)
        tau_y = _shear_strength(sigma, terrain.c, terrain.tan_phi) \
            * _shear_shape(np.abs(j_y), terrain.k, terrain.shear_curve)
        return geom.r * geom.b * tau_y

    F_y = math.copysign(integrate_arc(integrand, cg, integrator), wheel.beta)
    return TireForces(F_z=sol.F_z, F_y=F_y)
