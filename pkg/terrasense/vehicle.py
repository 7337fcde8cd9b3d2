# TerraSense — vehicle dynamics
# Three-DoF bicycle model, wheel-level slip extraction, the noisy sensor
# model and the drive profiles used by the scenarios.
#
# State layout (x, y, psi, u, v, omega_z): x, y locate the front axle in the
# world frame, u and v are body-frame velocities.

from __future__ import annotations
import math
from dataclasses import dataclass, fields
from typing import Sequence, Tuple

import numpy as np

from .constants import ESTIMATOR_DT, GRAVITY, SENSOR_SIGMAS, STATE_NAMES
from .errors import DomainError
from .terrain import WheelGeometry, WheelState

LOW_SPEED_GUARD = 0.1            # m/s


@dataclass(frozen=True)
class VehicleParams:
    M_t: float = 2500.0                    # mass, kg
    I_zz: float = 4000.0                   # yaw inertia, kg m^2
    L_f: float = 1.6                       # CG to front axle, m
    L_r: float = 1.6                       # CG to rear axle, m
    wheels_per_axle: int = 2

    def __post_init__(self):
        for name in ("M_t", "I_zz", "L_f", "L_r"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"vehicle parameter {name} must be > 0, got {val}")
        if self.wheels_per_axle < 1:
            raise DomainError("wheels_per_axle must be >= 1")

    @property
    def wheelbase(self) -> float:
        return self.L_f + self.L_r

    def static_wheel_loads(self) -> Tuple[float, float]:
        """Per-wheel static loads (front, rear), N."""
        Wt = self.M_t * GRAVITY / self.wheels_per_axle
        return Wt * self.L_r / self.wheelbase, Wt * self.L_f / self.wheelbase


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    u: float = 0.0
    v: float = 0.0
    omega_z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(getattr(self, f.name)) for f in fields(self)):
            raise DomainError(f"vehicle state must be finite: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.u, self.v, self.omega_z])

    @classmethod
    def from_array(cls, z: Sequence[float]) -> "VehicleState":
        return cls(*(float(c) for c in z[:6]))


@dataclass(frozen=True)
class DriveInputs:
    delta: float = 0.0                     # steering angle, rad
    a_x: float = 0.0                       # longitudinal acceleration, m/s^2
    wheel_omega: float = 0.0               # wheel spin rate, rad/s

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.delta, self.a_x, self.wheel_omega)):
            raise DomainError("drive inputs must be finite")


@dataclass(frozen=True)
class Measurement:
    t: float
    values: np.ndarray                     # (6,) in STATE_NAMES order

    def as_dict(self) -> dict:
        return dict(zip(STATE_NAMES, self.values.tolist()))


# ── Bicycle model ─────────────────────────────────────────────────────────────

def bicycle_rhs(z: np.ndarray, delta, a_x, F_yf, F_yr, p: VehicleParams) -> np.ndarray:
    """Vectorized derivative over leading axes of z (..., 6)."""
    psi, u, v, w = z[..., 2], z[..., 3], z[..., 4], z[..., 5]
    cp, sp = np.cos(psi), np.sin(psi)
    v_front = v + p.L_f * w
    dz = np.empty(np.broadcast_shapes(z.shape, np.shape(F_yf) + (6,)))
    dz[..., 0] = u * cp - v_front * sp
    dz[..., 1] = u * sp + v_front * cp
    dz[..., 2] = w
    dz[..., 3] = a_x
    dz[..., 4] = (F_yf + F_yr) / p.M_t - u * w
    dz[..., 5] = (F_yf * p.L_f - F_yr * p.L_r) / p.I_zz
    return dz


def bicycle_derivatives(z: VehicleState, inp: DriveInputs, F_yf: float, F_yr: float,
                        p: VehicleParams) -> np.ndarray:
    return bicycle_rhs(z.to_array(), inp.delta, inp.a_x, F_yf, F_yr, p)


def integrate_euler(z: VehicleState, dz: np.ndarray, dt: float) -> VehicleState:
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    return VehicleState.from_array(z.to_array() + dt * np.asarray(dz, dtype=float))


# ── Wheel slips ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AxleStates:
    """Per-wheel kinematics for both axles, arrays shaped (..., 2) as (front, rear)."""
    W: np.ndarray
    s: np.ndarray
    beta: np.ndarray
    v: np.ndarray
    delta_step: np.ndarray


def axle_states(z: np.ndarray, delta, wheel_omega, geom: WheelGeometry, p: VehicleParams,
                delta_step=0.0, step_dt: float = ESTIMATOR_DT) -> AxleStates:
    """Vectorized wheel kinematics for state arrays z (..., 6).

    delta_step per axle is the wheel heading change over one estimator step:
    the steering change plus yaw for the front, yaw alone for the rear.
    """
    z = np.asarray(z, dtype=float)
    u, v, w = z[..., 3], z[..., 4], z[..., 5]
    if np.any(u <= LOW_SPEED_GUARD):
        raise DomainError(f"longitudinal speed below {LOW_SPEED_GUARD} m/s; slip undefined")
    lat_f = v + p.L_f * w
    lat_r = v - p.L_r * w
    beta_f = delta - np.arctan(lat_f / u)
    beta_r = -np.arctan(lat_r / u)
    rim = geom.r * np.asarray(wheel_omega, dtype=float)
    s = (rim - u) / np.maximum(rim, u)
    W_f, W_r = p.static_wheel_loads()
    yaw_step = w * step_dt
    shape = u.shape + (2,)
    return AxleStates(
        W=np.broadcast_to(np.array([W_f, W_r]), shape),
        s=np.stack([s, s], axis=-1),
        beta=np.stack([beta_f, beta_r], axis=-1),
        v=np.stack([np.hypot(u, lat_f), np.hypot(u, lat_r)], axis=-1),
        delta_step=np.stack([delta_step + yaw_step, yaw_step + 0.0 * u], axis=-1),
    )


def wheel_slips(z: VehicleState, inp: DriveInputs, geom: WheelGeometry, p: VehicleParams,
                delta_step: float = 0.0) -> Tuple[WheelState, WheelState]:
    """(front, rear) wheel states for one vehicle state."""
    ax = axle_states(z.to_array(), inp.delta, inp.wheel_omega, geom, p, delta_step)
    return tuple(WheelState(W=float(ax.W[i]), s=float(ax.s[i]), beta=float(ax.beta[i]),
                            v=float(ax.v[i]), delta_step=float(ax.delta_step[i]))
                 for i in (0, 1))


# ── Sensors ───────────────────────────────────────────────────────────────────

def sensor_sample(z: VehicleState, rng: np.random.Generator, t: float = 0.0,
                  sigmas: Sequence[float] = SENSOR_SIGMAS) -> Measurement:
    """State plus independent Gaussian noise per channel."""
    noise = rng.normal(0.0, 1.0, size=6) * np.asarray(sigmas, dtype=float)
    return Measurement(t=t, values=z.to_array() + noise)


# ── Drive profiles ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DriveProfile:
    """Sinusoidal speed between speed_min and speed_max plus sinusoidal steering."""
    speed_min: float = 3.0                 # m/s
    speed_max: float = 8.0                 # m/s
    speed_period: float = 20.0             # s
    steer_amplitude: float = 0.1           # rad
    steer_period: float = 3.0              # s
    drive_slip: float = 0.1
    speed_phase: float = -math.pi / 2      # start at speed_min

    def __post_init__(self):
        if not 0 < self.speed_min <= self.speed_max:
            raise DomainError("speed profile needs 0 < speed_min <= speed_max")
        if self.speed_period <= 0 or self.steer_period <= 0:
            raise DomainError("profile periods must be > 0")
        if not 0 <= self.drive_slip < 1:
            raise DomainError("drive slip must be in [0, 1)")

    def speed(self, t):
        mid = 0.5 * (self.speed_max + self.speed_min)
        amp = 0.5 * (self.speed_max - self.speed_min)
        return mid + amp * np.sin(2 * math.pi * np.asarray(t) / self.speed_period + self.speed_phase)

    def accel(self, t):
        amp = 0.5 * (self.speed_max - self.speed_min)
        w = 2 * math.pi / self.speed_period
        return amp * w * np.cos(w * np.asarray(t) + self.speed_phase)

    def steer(self, t):
        return self.steer_amplitude * np.sin(2 * math.pi * np.asarray(t) / self.steer_period)

    def steer_rate(self, t):
        w = 2 * math.pi / self.steer_period
        return self.steer_amplitude * w * np.cos(w * np.asarray(t))

    def inputs(self, t: float, geom: WheelGeometry) -> DriveInputs:
        rim = float(self.speed(t)) / (1.0 - self.drive_slip)
        return DriveInputs(delta=float(self.steer(t)), a_x=float(self.accel(t)),
                           wheel_omega=rim / geom.r)

    def initial_state(self) -> VehicleState:
        return VehicleState(u=float(self.speed(0.0)))


def straight_profile(speed: float, drive_slip: float = 0.0) -> DriveProfile:
    """Constant speed, no steering."""
    return DriveProfile(speed_min=speed, speed_max=speed, steer_amplitude=0.0,
                        drive_slip=drive_slip)


def circular_reference(u: float, omega_z: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form (x, y) of the front axle for steady motion with v = -L_f omega_z, psi(0) = 0."""
    t = np.asarray(t, dtype=float)
    if omega_z == 0:
        return u * t, np.zeros_like(t)
    R = u / omega_z
    return R * np.sin(omega_z * t), R * (1.0 - np.cos(omega_z * t))


def axle_position(z: np.ndarray, p: VehicleParams, axle: str) -> Tuple[float, float]:
    """World position of the front or rear axle centre."""
    if axle == "front":
        return float(z[0]), float(z[1])
    return float(z[0] - p.wheelbase * math.cos(z[2])), float(z[1] - p.wheelbase * math.sin(z[2]))


def heading_of(z: np.ndarray, delta: float, axle: str) -> float:
    return float(z[2] + (delta if axle == "front" else 0.0))
