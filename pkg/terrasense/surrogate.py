"""
surrogate.py — TerraSense
Fast lateral-force surrogate: the base lateral stress with a steering-step
shear term and empirical correction functions g1 (stress magnitude), g2
(steering shear displacement) and g3 (lateral shear modulus), integrated with
the piecewise quadratic rule split at theta_m.

Signed lateral stress in the vehicle frame:

    j*     = -|r (1 - s)(theta_f - theta) tan(beta)| + sign(beta) r sin(theta) d_delta g2
    tau*_y = -sign(beta) sign(j*) tau_max shape(|j*| / g3) g1

which equals the base model when d_delta = 0, g1 = 1 and g3 = k.
"""

from __future__ import annotations
import logging
import math
import threading
from dataclasses import dataclass, replace
from typing import Callable, Dict, Set, Tuple, Union

import numpy as np

from .bekker import solve_sinkage_batch, solve_sinkage_point
from .coeffs import GFunCoeffs
from .constants import (
    BRANCH_LOWER, BRANCH_UPPER, DESIGN_BOUNDS, LOGGER_NAME, SLIP_RANGES,
)
from .errors import DomainError
from .quadrature import quadratic_arc_nodes
from .terrain import (
    ContactGeometry, TerrainParams, TireForces, WheelGeometry, WheelState,
    _check_finite, _contact_angles, _pressure, _shear_shape, _shear_strength, _sinkage_profile,
)

log = logging.getLogger(LOGGER_NAME)

_warned: Set[Tuple[str, str]] = set()
_warn_lock = threading.Lock()


# ── Slip range and branch ─────────────────────────────────────────────────────

def slip_range_ids(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.where(s >= SLIP_RANGES[1][0], 1,
                    np.where(s >= SLIP_RANGES[2][0], 2,
                             np.where(s > SLIP_RANGES[3][0], 3, 4)))


def select_slip_range(s: float) -> int:
    if not math.isfinite(s) or abs(s) > 1:
        raise DomainError(f"slip must be in [-1, 1], got {s}")
    return int(slip_range_ids(s))


def select_branch(beta: float, delta_step: float) -> str:
    """Upper curve while |beta| grows (beta * d_delta >= 0), lower otherwise."""
    return BRANCH_UPPER if beta * delta_step >= 0 else BRANCH_LOWER


def branch_mask(beta, delta_step) -> np.ndarray:
    """True where the upper branch applies."""
    return np.asarray(beta, dtype=float) * np.asarray(delta_step, dtype=float) >= 0


# ── Correction functions ──────────────────────────────────────────────────────

def _warn_extrapolation(inputs: Dict[str, np.ndarray]) -> None:
    for key, (lo, hi) in DESIGN_BOUNDS.items():
        x = np.asarray(inputs[key])
        for side, hit in (("low", np.any(x < lo)), ("high", np.any(x > hi))):
            if hit and (key, side) not in _warned:
                with _warn_lock:
                    if (key, side) in _warned:
                        continue
                    _warned.add((key, side))
                log.warning("Correction functions extrapolated: %s %s design range [%g, %g]",
                            key, "below" if side == "low" else "above", lo, hi)


def reset_extrapolation_warnings() -> None:
    with _warn_lock:
        _warned.clear()


def eval_g(which: str, v, s: float, F_z, n, coeffs: GFunCoeffs, branch: str):
    """Evaluate g1, g2 or g3 for one slip range (picked from s) and branch."""
    if which not in ("g1", "g2", "g3"):
        raise DomainError(f"unknown correction function {which!r}")
    gset = coeffs.get(select_slip_range(float(s)), branch)
    inputs = {"v": np.asarray(v, dtype=float), "s": np.asarray(s, dtype=float),
              "Fz": np.asarray(F_z, dtype=float), "n": np.asarray(n, dtype=float)}
    _warn_extrapolation(inputs)
    val = gset.evaluate(which, inputs)
    return float(val) if np.ndim(val) == 0 else val


def g_values(W, s, v, n, beta, delta_step, coeffs: GFunCoeffs):
    """Vectorized (g1, g2, g3), grouping elements by slip range and branch."""
    W, s, v, n, beta, delta_step = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (W, s, v, n, beta, delta_step)))
    _warn_extrapolation({"Fz": W, "s": s, "v": v, "n": n})
    rid = slip_range_ids(s)
    upper = branch_mask(beta, delta_step)
    out = [np.empty(s.shape) for _ in range(3)]
    for r in np.unique(rid):
        for is_upper, branch in ((True, BRANCH_UPPER), (False, BRANCH_LOWER)):
            sel = (rid == r) & (upper == is_upper)
            if not sel.any():
                continue
            gset = coeffs.get(int(r), branch)
            inputs = {"Fz": W[sel], "s": s[sel], "v": v[sel], "n": n[sel]}
            for k, g in enumerate(("g1", "g2", "g3")):
                out[k][sel] = gset.evaluate(g, inputs)
    return tuple(out)


# ── Quadratic integration ─────────────────────────────────────────────────────

def quadratic_integrate(f: Union[Callable[[np.ndarray], np.ndarray], np.ndarray],
                        cg: ContactGeometry) -> float:
    """Integrate a stress profile over [theta_r, theta_f] with the piecewise quadratic rule.

    `f` is either a callable of theta or its samples at the nodes of
    quadrature.quadratic_arc_nodes for this arc.
    """
    nodes, weights = quadratic_arc_nodes(cg.theta_r, cg.theta_m, cg.theta_f)
    if callable(f):
        values = np.asarray(f(nodes), dtype=float)
    else:
        values = np.asarray(f, dtype=float)
        if values.shape[-1:] != nodes.shape:
            raise DomainError(f"quadratic_integrate: expected {nodes.size} samples, "
                              f"got {values.shape[-1:]}")
    return float(np.sum(weights * values))


# ── Surrogate stress and force ────────────────────────────────────────────────

@dataclass(frozen=True)
class SurrogateContact:
    """Per operating point: sinkage, reaction and the quadratic nodes with tau_max there."""
    h: np.ndarray                          # (B,)
    F_z: np.ndarray                        # (B,)
    theta_f: np.ndarray                    # (B,)
    nodes: np.ndarray                      # (B, N)
    weights: np.ndarray                    # (B, N)
    tau_max: np.ndarray                    # (B, N)


def _contact_at(h: np.ndarray, F_z: np.ndarray, s: np.ndarray, n: np.ndarray,
                geom: WheelGeometry, terrain: TerrainParams) -> SurrogateContact:
    th_f, th_m, th_r = _contact_angles(h, s, geom.r, terrain.a0, terrain.a1,
                                       terrain.lambda_ratio)
    nodes, weights = quadratic_arc_nodes(th_r, th_m, th_f)
    sink = _sinkage_profile(nodes, th_f[:, None], th_m[:, None], th_r[:, None], geom.r)
    sigma = _pressure(sink, geom.b, terrain.k_c, terrain.k_phi, n[:, None])
    tau_max = _shear_strength(sigma, terrain.c, terrain.tan_phi)
    return SurrogateContact(h=h, F_z=F_z, theta_f=th_f, nodes=nodes, weights=weights,
                            tau_max=tau_max)


def surrogate_contact(W, s, n, geom: WheelGeometry, terrain: TerrainParams) -> SurrogateContact:
    W, s, n = (a.ravel() for a in np.broadcast_arrays(
        np.asarray(W, dtype=float), np.asarray(s, dtype=float), np.asarray(n, dtype=float)))
    h, F_z = solve_sinkage_batch(W, s, n, geom, terrain)
    return _contact_at(h, F_z, s, n, geom, terrain)


def _signed_stress(theta, theta_f, tau_max, s, beta, delta_step, g1, g2, g3, r, shear_curve):
    j_base = np.abs(r * (1.0 - s) * (theta_f - theta) * np.tan(beta))
    sb = np.sign(beta)
    j_star = -j_base + sb * r * np.sin(theta) * delta_step * g2
    return -sb * np.sign(j_star) * tau_max * _shear_shape(np.abs(j_star), g3, shear_curve) * g1


def lateral_force_with_factors(contact: SurrogateContact, s, beta, delta_step, g1, g2, g3,
                               geom: WheelGeometry, terrain: TerrainParams) -> np.ndarray:
    """Surrogate F_y for explicit correction values; arguments broadcast against contact rows."""
    g3 = np.asarray(g3, dtype=float)
    if np.any(~(g3 > 0)):
        raise DomainError("g3 must be > 0 (it scales the lateral shear modulus)")
    ex = lambda a: np.asarray(a, dtype=float)[..., None]
    tau = _signed_stress(contact.nodes, contact.theta_f[:, None], contact.tau_max,
                         ex(s), ex(beta), ex(delta_step), ex(g1), ex(g2), ex(g3),
                         geom.r, terrain.shear_curve)
    return geom.r * geom.b * np.sum(contact.weights * tau, axis=-1)


def surrogate_lateral_shear(theta, wheel: WheelState, cg: ContactGeometry, terrain: TerrainParams,
                            coeffs: GFunCoeffs, geom: WheelGeometry = WheelGeometry()):
    """Signed vehicle-frame lateral stress tau*_y at arc angle(s) theta, in Pa."""
    theta = np.asarray(theta, dtype=float)
    _check_finite("surrogate_lateral_shear", theta)
    if np.any(theta > cg.theta_f + 1e-12) or np.any(theta < cg.theta_r - 1e-12):
        raise DomainError("surrogate_lateral_shear: theta outside the contact arc")
    branch = select_branch(wheel.beta, wheel.delta_step)
    g1, g2, g3 = (eval_g(g, wheel.v, wheel.s, wheel.W, terrain.n, coeffs, branch)
                  for g in ("g1", "g2", "g3"))
    if not g3 > 0:
        raise DomainError(f"g3 = {g3:.6g} is not a valid shear modulus (must be > 0)")
    sink = _sinkage_profile(theta, cg.theta_f, cg.theta_m, cg.theta_r, geom.r)
    sigma = _pressure(sink, cg.b_eff, terrain.k_c, terrain.k_phi, terrain.n)
    tau_max = _shear_strength(sigma, terrain.c, terrain.tan_phi)
    tau = _signed_stress(theta, cg.theta_f, tau_max, wheel.s, wheel.beta, wheel.delta_step,
                         g1, g2, g3, geom.r, terrain.shear_curve)
    return float(tau) if np.ndim(tau) == 0 else tau


def surrogate_lateral_force_batch(W, s, beta, v, delta_step, n, geom: WheelGeometry,
                                  terrain: TerrainParams, coeffs: GFunCoeffs):
    """Vectorized surrogate over arrays of wheel states and sinkage exponents; returns (F_y, F_z)."""
    W, s, beta, v, delta_step, n = (a.ravel() for a in np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (W, s, beta, v, delta_step, n))))
    _check_finite("surrogate", W, s, beta, v, delta_step, n)
    if np.any(np.abs(beta) >= math.pi / 2):
        raise DomainError("side slip angle must satisfy |beta| < pi/2")
    contact = surrogate_contact(W, s, n, geom, terrain)
    g1, g2, g3 = g_values(W, s, v, n, beta, delta_step, coeffs)
    F_y = lateral_force_with_factors(contact, s, beta, delta_step, g1, g2, g3, geom, terrain)
    return F_y, contact.F_z


def _g_point(wheel: WheelState, n: float, coeffs: GFunCoeffs) -> Tuple[float, float, float]:
    gset = coeffs.get(select_slip_range(wheel.s), select_branch(wheel.beta, wheel.delta_step))
    inputs = {"Fz": wheel.W, "s": wheel.s, "v": wheel.v, "n": n}
    if any(not lo <= inputs[key] <= hi for key, (lo, hi) in DESIGN_BOUNDS.items()):
        _warn_extrapolation(inputs)
    return tuple(float(gset.evaluate(g, inputs)) for g in ("g1", "g2", "g3"))


def surrogate_lateral_force(wheel: WheelState, geom: WheelGeometry, terrain: TerrainParams,
                            coeffs: GFunCoeffs) -> TireForces:
    """Single-wheel surrogate; same numbers as the batch path with one set lookup per call."""
    if abs(wheel.beta) >= math.pi / 2:
        raise DomainError("side slip angle must satisfy |beta| < pi/2")
    g1, g2, g3 = _g_point(wheel, terrain.n, coeffs)
    h, F_z = solve_sinkage_point(wheel.W, wheel.s, terrain.n, geom, terrain)
    contact = _contact_at(np.array([h]), np.array([F_z]), np.array([wheel.s]),
                          np.array([terrain.n]), geom, terrain)
    F_y = lateral_force_with_factors(contact, wheel.s, wheel.beta, wheel.delta_step,
                                     g1, g2, g3, geom, terrain)
    return TireForces(F_z=F_z, F_y=float(F_y[0]))


def hysteresis_gap(wheel: WheelState, geom: WheelGeometry, terrain: TerrainParams,
                   coeffs: GFunCoeffs) -> float:
    """Distance between the upper and lower curves at the wheel's beta, in N.

    The steering step magnitude |wheel.delta_step| is applied once toward
    growing |beta| (upper curve) and once toward shrinking |beta| (lower curve).
    """
    d = abs(wheel.delta_step)
    sb = 1.0 if wheel.beta >= 0 else -1.0
    upper = surrogate_lateral_force(replace(wheel, delta_step=sb * d), geom, terrain, coeffs)
    lower = surrogate_lateral_force(replace(wheel, delta_step=-sb * d), geom, terrain, coeffs)
    return abs(upper.F_y - lower.F_y)
