"""
plant.py — TerraSense
Ground-truth vehicle: bicycle kinematics driven either by grid-SCM tire
forces ("scm") or by the surrogate itself ("model", used for consistency
checks). Produces the true trajectory and the noisy measurement stream.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .coeffs import GFunCoeffs
from .constants import ESTIMATOR_DT, LOGGER_NAME, MEASUREMENT_DT, PLANT_DT, SENSOR_SIGMAS
from .errors import ConfigError, DomainError
from .scm import (
    ContactPatch, HeightGrid, ScmConfig, TireMeshConfig, VerticalSettler, WheelPose,
    detect_contact, patch_forces, step_shear_state,
)
from .surrogate import surrogate_lateral_force_batch
from .terrain import TerrainParams, WheelGeometry, WheelState
from .vehicle import (
    DriveInputs, DriveProfile, VehicleParams, VehicleState,
    axle_position, axle_states, bicycle_rhs, heading_of, sensor_sample,
)

log = logging.getLogger(LOGGER_NAME)

PLANT_KINDS = ("scm", "model")
AXLES = ("front", "rear")


@dataclass(frozen=True)
class PlantConfig:
    kind: str = "scm"                      # scm | model
    dt: float = PLANT_DT                   # s
    measurement_dt: float = MEASUREMENT_DT # s
    duration: float = 30.0                 # s
    seed: int = 0
    sensor_sigmas: Tuple[float, ...] = SENSOR_SIGMAS
    n_f: float = 0.5                       # true front sinkage exponent
    n_r: float = 0.5                       # true rear sinkage exponent

    def __post_init__(self):
        if self.kind not in PLANT_KINDS:
            raise ConfigError(f"unknown plant kind {self.kind!r}; expected one of {PLANT_KINDS}")
        if not self.dt > 0 or not self.duration > 0:
            raise ConfigError("plant dt and duration must be > 0")
        ratio = self.measurement_dt / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("measurement_dt must be a whole multiple of the plant dt")
        if len(self.sensor_sigmas) != 6:
            raise ConfigError("sensor_sigmas needs six values")

    @property
    def measure_every(self) -> int:
        return int(round(self.measurement_dt / self.dt))


@dataclass
class AxleContact:
    """SCM state owned by one axle: its grid, patch and vertical DOF."""
    grid: HeightGrid
    mesh: TireMeshConfig
    settler: VerticalSettler
    patch: Optional[ContactPatch] = None


@dataclass
class PlantState:
    t: float
    z: np.ndarray                          # (6,) vehicle state
    axles: Dict[str, AxleContact] = field(default_factory=dict)
    prev_delta: float = 0.0                # steering one estimator step ago
    step: int = 0


@dataclass
class PlantOutputs:
    F_y: Tuple[float, float]               # axle lateral forces (front, rear), N
    F_z: Tuple[float, float]               # per-wheel vertical forces, N


@dataclass
class PlantTrace:
    """Recorded true run: states and inputs at every plant step, measurements on their ticks."""
    t: np.ndarray
    states: np.ndarray                     # (N, 6)
    delta: np.ndarray
    a_x: np.ndarray
    wheel_omega: np.ndarray
    F_y: np.ndarray                        # (N, 2)
    F_z: np.ndarray                        # (N, 2)
    meas_t: np.ndarray
    meas: np.ndarray                       # (M, 6)
    n_true: Tuple[float, float] = (0.0, 0.0)
    dt: float = PLANT_DT

    def state_at(self, t: float) -> np.ndarray:
        i = int(round(t / self.dt))
        if i < 0 or i >= self.t.size:
            raise DomainError(f"time {t} outside the plant trace")
        return self.states[i]

    def measurement_at(self, t: float, tol: float = 1e-9) -> Optional[np.ndarray]:
        i = int(np.searchsorted(self.meas_t, t - tol))
        if i < self.meas_t.size and abs(self.meas_t[i] - t) <= tol:
            return self.meas[i]
        return None

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.states, self.delta, self.a_x, self.wheel_omega,
                                self.F_y[:, 0], self.F_y[:, 1]])

    def measurement_rows(self) -> np.ndarray:
        return np.column_stack([self.meas_t, self.meas])


class Plant:
    """Steps the true vehicle at the plant rate."""

    def __init__(self, params: VehicleParams, geom: WheelGeometry, terrain: TerrainParams,
                 profile: DriveProfile, cfg: PlantConfig, scm: ScmConfig = ScmConfig(),
                 coeffs: Optional[GFunCoeffs] = None):
        if cfg.kind == "model" and coeffs is None:
            raise ConfigError("model plant needs correction coefficients")
        self.params, self.geom, self.profile, self.cfg = params, geom, profile, cfg
        self.scm, self.coeffs = scm, coeffs
        self.terrains = (terrain.with_exponent(cfg.n_f), terrain.with_exponent(cfg.n_r))
        z0 = profile.initial_state().to_array()
        self.state = PlantState(t=0.0, z=z0, prev_delta=float(profile.steer(-ESTIMATOR_DT)))
        if cfg.kind == "scm":
            self.state.axles = self._init_axles(z0)

    def _init_axles(self, z0: np.ndarray) -> Dict[str, AxleContact]:
        loads = self.params.static_wheel_loads()
        axles = {}
        for i, name in enumerate(AXLES):
            x, y = axle_position(z0, self.params, name)
            grid = self.scm.new_grid(center=(x, y))
            settler = VerticalSettler.for_wheel(loads[i], self.profile.drive_slip, self.geom,
                                                self.terrains[i])
            axles[name] = AxleContact(grid=grid, mesh=self.scm.mesh(self.geom), settler=settler)
        return axles

    def inputs(self, t: float) -> DriveInputs:
        return self.profile.inputs(t, self.geom)

    def _scm_forces(self, st: PlantState, inp: DriveInputs) -> PlantOutputs:
        ax = axle_states(st.z, inp.delta, inp.wheel_omega, self.geom, self.params)
        yaw = float(st.z[5])
        steer_rate = float(self.profile.steer_rate(st.t))
        F_y, F_z = [], []
        for i, name in enumerate(AXLES):
            contact = st.axles[name]
            x, y = axle_position(st.z, self.params, name)
            contact.grid.recenter(x, y)
            pose = WheelPose(x, y, contact.settler.z, heading_of(st.z, inp.delta, name))
            wheel = WheelState(W=float(ax.W[i]), s=float(ax.s[i]), beta=float(ax.beta[i]),
                               v=float(ax.v[i]))
            patch = detect_contact(pose, contact.mesh, contact.grid, contact.patch)
            patch = step_shear_state(patch, wheel, self.cfg.dt,
                                     yaw + (steer_rate if name == "front" else 0.0))
            f = patch_forces(patch, self.terrains[i])
            contact.grid.apply_patch(patch)
            contact.patch = patch
            contact.settler.step(f.F_z, self.cfg.dt)
            F_y.append(self.params.wheels_per_axle * f.F_y)
            F_z.append(f.F_z)
        return PlantOutputs(F_y=(F_y[0], F_y[1]), F_z=(F_z[0], F_z[1]))

    def _model_forces(self, st: PlantState, inp: DriveInputs) -> PlantOutputs:
        ax = axle_states(st.z, inp.delta, inp.wheel_omega, self.geom, self.params,
                         delta_step=inp.delta - st.prev_delta)
        n = np.array([self.cfg.n_f, self.cfg.n_r])
        F_y, F_z = surrogate_lateral_force_batch(ax.W, ax.s, ax.beta, ax.v, ax.delta_step, n,
                                                 self.geom, self.terrains[0], self.coeffs)
        k = self.params.wheels_per_axle
        return PlantOutputs(F_y=(k * float(F_y[0]), k * float(F_y[1])),
                            F_z=(float(F_z[0]), float(F_z[1])))

    def step(self) -> Tuple[DriveInputs, PlantOutputs]:
        """Advance one plant step; returns the inputs and forces applied over it."""
        out, inp = plant_step(self, self.state)
        return inp, out


def plant_step(plant: Plant, st: PlantState) -> Tuple[PlantOutputs, DriveInputs]:
    """Forward-Euler step of the bicycle model with the plant's tire forces."""
    inp = plant.inputs(st.t)
    if plant.cfg.kind == "scm":
        out = plant._scm_forces(st, inp)
    else:
        out = plant._model_forces(st, inp)
    dz = bicycle_rhs(st.z, inp.delta, inp.a_x, out.F_y[0], out.F_y[1], plant.params)
    st.z = st.z + plant.cfg.dt * dz
    if not np.all(np.isfinite(st.z)):
        raise DomainError(f"plant state became non-finite at t={st.t:.3f}")
    st.step += 1
    st.t = st.step * plant.cfg.dt
    st.prev_delta = float(plant.profile.steer(st.t - ESTIMATOR_DT))
    return out, inp


def simulate(params: VehicleParams, geom: WheelGeometry, terrain: TerrainParams,
             profile: DriveProfile, cfg: PlantConfig, scm: ScmConfig = ScmConfig(),
             coeffs: Optional[GFunCoeffs] = None) -> PlantTrace:
    """Run the plant for cfg.duration and sample the sensors every measurement_dt."""
    plant = Plant(params, geom, terrain, profile, cfg, scm, coeffs)
    rng = np.random.default_rng(cfg.seed)
    n_steps = int(round(cfg.duration / cfg.dt))
    ts, zs, deltas, axs, omegas, fys, fzs = [], [], [], [], [], [], []
    meas_t: List[float] = []
    meas: List[np.ndarray] = []
    for k in range(n_steps + 1):
        st = plant.state
        if k % cfg.measure_every == 0:
            m = sensor_sample(VehicleState.from_array(st.z), rng, st.t, cfg.sensor_sigmas)
            meas_t.append(k * cfg.dt)
            meas.append(m.values)
        t_k, z_k = k * cfg.dt, st.z.copy()
        if k == n_steps:
            inp = plant.inputs(st.t)
            out = PlantOutputs(F_y=(math.nan, math.nan), F_z=(math.nan, math.nan))
        else:
            inp, out = plant.step()
        ts.append(t_k)
        zs.append(z_k)
        deltas.append(inp.delta)
        axs.append(inp.a_x)
        omegas.append(inp.wheel_omega)
        fys.append(out.F_y)
        fzs.append(out.F_z)
    log.info("Plant (%s) simulated %.1f s: final u=%.2f m/s, x=%.1f m",
             cfg.kind, cfg.duration, zs[-1][3], zs[-1][0])
    return PlantTrace(t=np.array(ts), states=np.array(zs), delta=np.array(deltas),
                      a_x=np.array(axs), wheel_omega=np.array(omegas), F_y=np.array(fys),
                      F_z=np.array(fzs), meas_t=np.array(meas_t), meas=np.array(meas),
                      n_true=(cfg.n_f, cfg.n_r), dt=cfg.dt)
