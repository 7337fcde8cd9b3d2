"""
terrain.py — TerraSense
Terrain and wheel domain types plus the pointwise classical terramechanics
relations (pressure, shear, contact angles, sinkage profile, shear
displacement) shared by the Bekker model, the surrogate and the grid oracle.

Every public relation accepts scalars or numpy arrays and returns the same
kind. The underscore helpers skip validation and take raw parameter values so
that batched callers can broadcast over per-element sinkage exponents.
"""

from __future__ import annotations
import math
from dataclasses import dataclass, replace
from typing import Tuple, Union

import numpy as np

from .constants import (
    DEFAULT_A0, DEFAULT_A1, DEFAULT_LAMBDA_RATIO,
    DEFAULT_WHEEL_RADIUS, DEFAULT_WHEEL_WIDTH,
)
from .errors import ContactGeometryError, DomainError

ArrayLike = Union[float, np.ndarray]

SHEAR_CURVES = ("exponential", "hump")

# Tolerance used when checking angles against the contact arc.
ARC_TOL = 1e-12


# ── Data classes ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TerrainParams:
    k_c: float                             # cohesive modulus, N/m^(n+1)
    k_phi: float                           # frictional modulus, N/m^(n+2)
    n: float                               # sinkage exponent
    k: float                               # shear deformation modulus, m
    c: float                               # cohesion, Pa
    phi: float                             # internal friction angle, rad
    a0: float = DEFAULT_A0                 # max-stress location, constant term
    a1: float = DEFAULT_A1                 # max-stress location, slip term
    lambda_ratio: float = DEFAULT_LAMBDA_RATIO
    shear_curve: str = "exponential"       # exponential | hump
    name: str = "custom"

    def __post_init__(self):
        _check_finite("terrain", self.k_c, self.k_phi, self.n, self.k, self.c,
                      self.phi, self.a0, self.a1, self.lambda_ratio)
        if self.k_c < 0:
            raise DomainError(f"k_c must be >= 0, got {self.k_c}")
        if self.k_phi <= 0:
            raise DomainError(f"k_phi must be > 0, got {self.k_phi}")
        if not 0 < self.n <= 2:
            raise DomainError(f"sinkage exponent n must be in (0, 2], got {self.n}")
        if self.k <= 0:
            raise DomainError(f"shear modulus k must be > 0, got {self.k}")
        if self.c < 0:
            raise DomainError(f"cohesion c must be >= 0, got {self.c}")
        if not 0 <= self.phi < math.pi / 2:
            raise DomainError(f"friction angle phi must be in [0, pi/2), got {self.phi}")
        if not 0 <= self.lambda_ratio <= 1:
            raise DomainError(f"lambda_ratio must be in [0, 1], got {self.lambda_ratio}")
        if not 0 <= self.a0 <= 1:
            raise DomainError(f"a0 must be in [0, 1], got {self.a0}")
        if not 0 <= self.a1 <= 0.3:
            raise DomainError(f"a1 must be in [0, 0.3], got {self.a1}")
        if self.shear_curve not in SHEAR_CURVES:
            raise DomainError(f"shear_curve must be one of {SHEAR_CURVES}, got {self.shear_curve!r}")

    @property
    def tan_phi(self) -> float:
        return math.tan(self.phi)

    def with_exponent(self, n: float) -> "TerrainParams":
        return replace(self, n=float(n))


@dataclass(frozen=True)
class WheelState:
    W: float                               # normal load, N
    s: float                               # longitudinal slip
    beta: float                            # side slip angle, rad
    v: float                               # translational speed, m/s
    camber: float = 0.0                    # rad, held at 0
    delta_step: float = 0.0                # steering change over one estimator step, rad

    def __post_init__(self):
        _check_finite("wheel state", self.W, self.s, self.beta, self.v,
                      self.camber, self.delta_step)
        if self.W < 0:
            raise DomainError(f"wheel load must be >= 0, got {self.W}")
        if self.v < 0:
            raise DomainError(f"wheel speed must be >= 0, got {self.v}")
        if abs(self.s) > 1:
            raise DomainError(f"slip must be in [-1, 1], got {self.s}")


@dataclass(frozen=True)
class WheelGeometry:
    r: float = DEFAULT_WHEEL_RADIUS        # m
    b: float = DEFAULT_WHEEL_WIDTH         # m

    def __post_init__(self):
        _check_finite("wheel geometry", self.r, self.b)
        if self.r <= 0 or self.b <= 0:
            raise DomainError(f"wheel radius and width must be > 0, got r={self.r}, b={self.b}")


@dataclass(frozen=True)
class ContactGeometry:
    theta_f: float                         # entry angle, rad
    theta_r: float                         # exit angle, rad
    theta_m: float                         # max normal stress angle, rad
    h_max: float                           # maximum sinkage, m
    b_eff: float                           # effective width, m

    def __post_init__(self):
        _check_finite("contact geometry", self.theta_f, self.theta_r, self.theta_m,
                      self.h_max, self.b_eff)
        if not (self.theta_r - ARC_TOL <= self.theta_m <= self.theta_f + ARC_TOL):
            raise ContactGeometryError(
                f"contact angles out of order: theta_r={self.theta_r:.6g}, "
                f"theta_m={self.theta_m:.6g}, theta_f={self.theta_f:.6g}")
        if self.h_max < 0:
            raise ContactGeometryError(f"h_max must be >= 0, got {self.h_max}")
        if not 0 <= self.theta_f < math.pi / 2:
            raise ContactGeometryError(f"theta_f must be in [0, pi/2), got {self.theta_f}")

    @property
    def arc(self) -> float:
        return self.theta_f - self.theta_r


@dataclass(frozen=True)
class TireForces:
    F_z: float                             # normal reaction, N
    F_y: float                             # lateral force in the vehicle frame, N


# ── Validation helpers ────────────────────────────────────────────────────────

def _check_finite(what: str, *values: ArrayLike) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"{what}: non-finite input {v!r}")


def _out(x: np.ndarray) -> ArrayLike:
    return float(x) if np.ndim(x) == 0 else x


# ── Vectorized primitives (no validation) ─────────────────────────────────────

def _pressure(h, b, k_c, k_phi, n):
    return (k_c / b + k_phi) * np.power(h, n)


def _shear_strength(sigma, c, tan_phi):
    return c + sigma * tan_phi


def _shear_shape(j_abs, k, curve: str):
    """Normalized shear curve: exponential saturation or the hump form."""
    x = j_abs / k
    if curve == "hump":
        return x * np.exp(1.0 - x)
    return -np.expm1(-x)


def _contact_angles(h, s, r, a0, a1, lambda_ratio):
    theta_f = np.arccos(1.0 - h / r)
    theta_m = (a0 + a1 * s) * theta_f
    theta_r = np.arccos(1.0 - lambda_ratio * h / r)
    return theta_f, theta_m, theta_r


def _front_sinkage(theta, theta_f, r):
    return r * (np.cos(theta) - np.cos(theta_f))


def _rear_sinkage(theta, theta_f, theta_m, theta_r, r):
    denom = theta_m - theta_r
    safe = np.where(denom > 0, denom, 1.0)
    theta_e = np.where(denom > 0,
                       theta_f - (theta - theta_r) * (theta_f - theta_m) / safe,
                       theta_f)
    return r * (np.cos(theta_e) - np.cos(theta_f))


def _sinkage_profile(theta, theta_f, theta_m, theta_r, r):
    h = np.where(theta >= theta_m,
                 _front_sinkage(theta, theta_f, r),
                 _rear_sinkage(theta, theta_f, theta_m, theta_r, r))
    return np.maximum(h, 0.0)


def _slip_factor(s):
    s = np.asarray(s, dtype=float)
    pos = 1.0 - s
    neg = 1.0 / np.where(s < 0, 1.0 + s, 1.0)
    return np.where(s >= 0, pos, neg)


def _shear_displacement(theta, s, theta_f, r):
    return r * ((theta_f - theta) - _slip_factor(s) * (np.sin(theta_f) - np.sin(theta)))


def _lateral_shear_displacement(theta, s, beta, theta_f, r):
    return r * (1.0 - s) * (theta_f - theta) * np.tan(beta)


# ── Public relations ──────────────────────────────────────────────────────────

def normal_stress(h: ArrayLike, b: float, terrain: TerrainParams) -> ArrayLike:
    """Bekker pressure (k_c/b + k_phi) h^n in Pa."""
    _check_finite("normal_stress", h, b)
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise DomainError("normal_stress: sinkage must be >= 0")
    if b <= 0:
        raise DomainError(f"normal_stress: width must be > 0, got {b}")
    return _out(_pressure(h, b, terrain.k_c, terrain.k_phi, terrain.n))


def shear_strength(sigma: ArrayLike, terrain: TerrainParams) -> ArrayLike:
    """Mohr-Coulomb limit c + sigma tan(phi)."""
    _check_finite("shear_strength", sigma)
    return _out(_shear_strength(np.asarray(sigma, dtype=float), terrain.c, terrain.tan_phi))


def shear_stress(j: ArrayLike, sigma: ArrayLike, terrain: TerrainParams) -> ArrayLike:
    """Janosi shear (c + sigma tan(phi)) (1 - exp(-j/k))."""
    _check_finite("shear_stress", j, sigma)
    j = np.asarray(j, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(j < 0):
        raise DomainError("shear_stress: shear displacement must be >= 0")
    if np.any(sigma < 0):
        raise DomainError("shear_stress: pressure must be >= 0")
    if terrain.k <= 0:
        raise DomainError(f"shear_stress: k must be > 0, got {terrain.k}")
    tau_max = _shear_strength(sigma, terrain.c, terrain.tan_phi)
    return _out(tau_max * _shear_shape(j, terrain.k, "exponential"))


def lateral_shear_stress(j_y: ArrayLike, sigma: ArrayLike, terrain: TerrainParams,
                         k_y: float = 0.0) -> ArrayLike:
    """Lateral shear magnitude using the terrain's shear curve; k_y defaults to k."""
    _check_finite("lateral_shear_stress", j_y, sigma)
    k_y = k_y or terrain.k
    if k_y <= 0:
        raise DomainError(f"lateral_shear_stress: k_y must be > 0, got {k_y}")
    tau_max = _shear_strength(np.asarray(sigma, dtype=float), terrain.c, terrain.tan_phi)
    return _out(tau_max * _shear_shape(np.abs(j_y), k_y, terrain.shear_curve))


def contact_angles(h_f: float, s: float, geom: WheelGeometry,
                   terrain: TerrainParams) -> ContactGeometry:
    _check_finite("contact_angles", h_f, s)
    if h_f < 0:
        raise ContactGeometryError(f"sinkage must be >= 0, got {h_f}")
    if h_f >= geom.r:
        raise ContactGeometryError(f"over-penetration: sinkage {h_f} >= radius {geom.r}")
    if abs(s) > 1:
        raise DomainError(f"slip must be in [-1, 1], got {s}")
    theta_f, theta_m, theta_r = _contact_angles(h_f, s, geom.r, terrain.a0, terrain.a1,
                                                terrain.lambda_ratio)
    return ContactGeometry(theta_f=float(theta_f), theta_r=float(theta_r),
                           theta_m=float(theta_m), h_max=float(h_f), b_eff=geom.b)


def _check_arc(theta: np.ndarray, cg: ContactGeometry, rear_bound: bool = True) -> None:
    hi = cg.theta_f + ARC_TOL
    lo = cg.theta_r - ARC_TOL
    if np.any(theta > hi) or (rear_bound and np.any(theta < lo)):
        raise ContactGeometryError(
            f"theta outside contact arc [{cg.theta_r:.6g}, {cg.theta_f:.6g}]")


def front_sinkage(theta: ArrayLike, cg: ContactGeometry, geom: WheelGeometry) -> ArrayLike:
    return _out(_front_sinkage(np.asarray(theta, dtype=float), cg.theta_f, geom.r))


def rear_sinkage(theta: ArrayLike, cg: ContactGeometry, geom: WheelGeometry) -> ArrayLike:
    return _out(_rear_sinkage(np.asarray(theta, dtype=float), cg.theta_f, cg.theta_m,
                              cg.theta_r, geom.r))


def sinkage_profile(theta: ArrayLike, cg: ContactGeometry, geom: WheelGeometry) -> ArrayLike:
    """Sinkage along the contact arc: front branch above theta_m, rear branch below."""
    _check_finite("sinkage_profile", theta)
    theta = np.asarray(theta, dtype=float)
    _check_arc(theta, cg)
    return _out(_sinkage_profile(theta, cg.theta_f, cg.theta_m, cg.theta_r, geom.r))


def shear_displacement(theta: ArrayLike, s: float, cg: ContactGeometry,
                       geom: WheelGeometry) -> ArrayLike:
    """Longitudinal shear displacement j(theta); negative values mean reversed shear."""
    _check_finite("shear_displacement", theta, s)
    theta = np.asarray(theta, dtype=float)
    _check_arc(theta, cg, rear_bound=False)
    if not -1 < s <= 1:
        raise DomainError(f"shear_displacement: slip must be in (-1, 1], got {s}")
    return _out(_shear_displacement(theta, s, cg.theta_f, geom.r))


def lateral_shear_displacement(theta: ArrayLike, s: float, beta: float, cg: ContactGeometry,
                               geom: WheelGeometry) -> ArrayLike:
    _check_finite("lateral_shear_displacement", theta, s, beta)
    theta = np.asarray(theta, dtype=float)
    _check_arc(theta, cg, rear_bound=False)
    if abs(beta) >= math.pi / 2:
        raise DomainError(f"side slip angle must satisfy |beta| < pi/2, got {beta}")
    return _out(_lateral_shear_displacement(theta, s, beta, cg.theta_f, geom.r))


def stress_profiles(theta: np.ndarray, s: float, cg: ContactGeometry, geom: WheelGeometry,
                    terrain: TerrainParams) -> Tuple[np.ndarray, np.ndarray]:
    """Normal stress and signed longitudinal shear at the given arc angles."""
    h = _sinkage_profile(theta, cg.theta_f, cg.theta_m, cg.theta_r, geom.r)
    sigma = _pressure(h, cg.b_eff, terrain.k_c, terrain.k_phi, terrain.n)
    j = _shear_displacement(theta, s, cg.theta_f, geom.r)
    tau = _shear_strength(sigma, terrain.c, terrain.tan_phi) * np.sign(j) \
        * _shear_shape(np.abs(j), terrain.k, "exponential")
    return sigma, tau
