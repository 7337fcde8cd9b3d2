"""
scm.py — TerraSense
Grid-based soil contact model used as ground truth: a windowed height grid,
tire-mesh contact detection, per-column stresses with accumulated shear
displacement, force summation, and the single-wheel test bed.

Grid conventions
  - Columns sit on a global lattice anchored at world (0, 0); a grid is a
    moving window onto that lattice (`offset` is the global index of local
    column (0, 0)).
  - `heights` is the current surface, `permanent_sinkage` the plastic
    compaction; the undeformed level is heights + permanent_sinkage.
  - Wheel frame: forward along the heading, lateral to its left, theta
    measured from the bottom of the wheel, positive toward the front.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .bekker import normal_force, solve_sinkage
from .constants import GRAVITY, LOGGER_NAME, PLANT_DT
from .errors import DomainError, ScmError
from .terrain import TerrainParams, TireForces, WheelGeometry, WheelState, _shear_shape

log = logging.getLogger(LOGGER_NAME)

CONTACT_TOL = 1e-4               # m, column counts as touched within this gap
DEFAULT_SPACING = 0.01           # m
DEFAULT_ARC_HALF = 0.7           # rad, meshed part of the lower tire arc
MIN_NODES = 8
_KEY_SHIFT = np.int64(1) << np.int64(32)
_KEY_BIAS = np.int64(1) << np.int64(31)


def cell_keys(gi: np.ndarray, gj: np.ndarray) -> np.ndarray:
    """Global int64 key of lattice column (gi, gj)."""
    return gi.astype(np.int64) * _KEY_SHIFT + (gj.astype(np.int64) + _KEY_BIAS)


# ── Height grid ───────────────────────────────────────────────────────────────

@dataclass
class HeightGrid:
    spacing: float                         # m
    heights: np.ndarray                    # (nx, ny) current surface, m
    permanent_sinkage: np.ndarray          # (nx, ny) compaction below the original level, m
    offset: Tuple[int, int] = (0, 0)       # global index of local column (0, 0)
    base_level: float = 0.0                # level of fresh terrain entering the window, m

    def __post_init__(self):
        if not self.spacing > 0:
            raise DomainError(f"grid spacing must be > 0, got {self.spacing}")
        self.heights = np.array(self.heights, dtype=float)
        self.permanent_sinkage = np.array(self.permanent_sinkage, dtype=float)
        if self.heights.ndim != 2 or self.heights.shape != self.permanent_sinkage.shape:
            raise DomainError("heights and permanent_sinkage must be 2-D arrays of the same shape")
        if not np.all(np.isfinite(self.heights)):
            raise DomainError("grid heights must be finite")
        self.offset = (int(self.offset[0]), int(self.offset[1]))

    @classmethod
    def flat(cls, length: float, width: float, spacing: float = DEFAULT_SPACING,
             center: Tuple[float, float] = (0.0, 0.0), level: float = 0.0) -> "HeightGrid":
        nx = max(int(math.ceil(length / spacing)), 2)
        ny = max(int(math.ceil(width / spacing)), 2)
        offset = (int(round(center[0] / spacing)) - nx // 2,
                  int(round(center[1] / spacing)) - ny // 2)
        return cls(spacing=spacing, heights=np.full((nx, ny), level),
                   permanent_sinkage=np.zeros((nx, ny)), offset=offset, base_level=level)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.heights.shape

    @property
    def origin(self) -> Tuple[float, float]:
        """World position of the centre of local column (0, 0)."""
        return self.offset[0] * self.spacing, self.offset[1] * self.spacing

    @property
    def original_level(self) -> np.ndarray:
        return self.heights + self.permanent_sinkage

    def recenter(self, x: float, y: float) -> bool:
        """Scroll the window so (x, y) stays away from its edges. Returns True if it moved."""
        nx, ny = self.shape
        want = (int(round(x / self.spacing)) - nx // 2, int(round(y / self.spacing)) - ny // 2)
        di, dj = want[0] - self.offset[0], want[1] - self.offset[1]
        if abs(di) < nx // 4 and abs(dj) < ny // 4:
            return False
        heights = np.full((nx, ny), self.base_level)
        perm = np.zeros((nx, ny))
        src_i = slice(max(di, 0), min(nx, nx + di))
        dst_i = slice(max(-di, 0), min(nx, nx - di))
        src_j = slice(max(dj, 0), min(ny, ny + dj))
        dst_j = slice(max(-dj, 0), min(ny, ny - dj))
        if src_i.start < src_i.stop and src_j.start < src_j.stop:
            heights[dst_i, dst_j] = self.heights[src_i, src_j]
            perm[dst_i, dst_j] = self.permanent_sinkage[src_i, src_j]
        self.heights, self.permanent_sinkage = heights, perm
        self.offset = want
        return True

    def apply_patch(self, patch: "ContactPatch") -> None:
        """Press the surface down to the tire under every contact column."""
        if patch.empty:
            return
        rows = (patch.keys // _KEY_SHIFT) - self.offset[0]
        cols = (patch.keys % _KEY_SHIFT) - _KEY_BIAS - self.offset[1]
        nx, ny = self.shape
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= nx or cols.max() >= ny:
            raise ScmError("contact patch lies outside the grid window; recenter first")
        original = self.heights[rows, cols] + self.permanent_sinkage[rows, cols]
        surface = np.minimum(self.heights[rows, cols], original - patch.sinkage)
        self.heights[rows, cols] = surface
        self.permanent_sinkage[rows, cols] = original - surface


# ── Tire mesh ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TireMeshConfig:
    n_circ: int = 64                       # vertices along the lower arc
    n_lat: int = 16                        # vertices across the width
    r: float = 0.45                        # m
    b: float = 0.25                        # m
    arc_half: float = DEFAULT_ARC_HALF     # rad

    def __post_init__(self):
        if self.n_circ < MIN_NODES or self.n_lat < MIN_NODES:
            raise DomainError(f"tire mesh needs at least {MIN_NODES} nodes per direction, "
                              f"got {self.n_circ}x{self.n_lat}")
        if self.r <= 0 or self.b <= 0 or not 0 < self.arc_half < math.pi / 2:
            raise DomainError("tire mesh: r, b must be > 0 and arc_half in (0, pi/2)")

    @classmethod
    def for_grid(cls, spacing: float, geom: WheelGeometry,
                 arc_half: float = DEFAULT_ARC_HALF) -> "TireMeshConfig":
        """Smallest mesh (at least 64 x 16) whose node spacing does not exceed the grid spacing."""
        n_circ = max(64, int(math.ceil(2.0 * arc_half * geom.r / spacing)))
        n_lat = max(16, int(math.ceil(geom.b / spacing)))
        return cls(n_circ=n_circ, n_lat=n_lat, r=geom.r, b=geom.b, arc_half=arc_half)

    @property
    def circ_spacing(self) -> float:
        return 2.0 * self.arc_half * self.r / self.n_circ

    @property
    def lat_spacing(self) -> float:
        return self.b / self.n_lat

    def vertices(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Strip-midpoint vertices in the wheel frame: (forward, lateral, depth below centre)."""
        dth = 2.0 * self.arc_half / self.n_circ
        theta = -self.arc_half + (np.arange(self.n_circ) + 0.5) * dth
        eta = -0.5 * self.b + (np.arange(self.n_lat) + 0.5) * self.lat_spacing
        th, et = np.meshgrid(theta, eta, indexing="ij")
        return self.r * np.sin(th).ravel(), et.ravel(), self.r * np.cos(th).ravel()


@dataclass(frozen=True)
class WheelPose:
    x: float                               # wheel centre, world, m
    y: float
    z: float                               # wheel centre height, m
    heading: float                         # rad


# ── Contact patch ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ContactPatch:
    keys: np.ndarray                       # global column keys, sorted
    sinkage: np.ndarray                    # h per column, m
    theta: np.ndarray                      # arc angle of the column centre, rad
    forward: np.ndarray                    # column centre ahead of the wheel centre, m
    area: np.ndarray                       # horizontal column area, m^2
    j: np.ndarray                          # longitudinal shear displacement, m
    j_y: np.ndarray                        # lateral shear displacement, m
    b_eff: float = 0.0
    footprint_area: float = 0.0
    contour_length: float = 0.0

    @property
    def empty(self) -> bool:
        return self.keys.size == 0

    @property
    def n_nodes(self) -> int:
        return int(self.keys.size)

    @property
    def h_max(self) -> float:
        return float(self.sinkage.max()) if self.keys.size else 0.0

    @classmethod
    def empty_patch(cls) -> "ContactPatch":
        z = np.zeros(0)
        return cls(keys=np.zeros(0, dtype=np.int64), sinkage=z, theta=z, forward=z, area=z,
                   j=z, j_y=z)


def _contour_length(rows: np.ndarray, cols: np.ndarray, spacing: float) -> float:
    """Length of the boundary between contact and free columns."""
    r0, c0 = rows.min(), cols.min()
    mask = np.zeros((rows.max() - r0 + 3, cols.max() - c0 + 3), dtype=bool)
    mask[rows - r0 + 1, cols - c0 + 1] = True
    inner = mask[1:-1, 1:-1]
    edges = (np.count_nonzero(inner & ~mask[:-2, 1:-1]) + np.count_nonzero(inner & ~mask[2:, 1:-1])
             + np.count_nonzero(inner & ~mask[1:-1, :-2]) + np.count_nonzero(inner & ~mask[1:-1, 2:]))
    return edges * spacing


def detect_contact(pose: WheelPose, mesh: TireMeshConfig, grid: HeightGrid,
                   previous: Optional[ContactPatch] = None) -> ContactPatch:
    """Project the tire mesh onto the grid and collect the touched columns.

    Shear displacement carries over from `previous` for columns still in
    contact; columns entering contact start at zero.
    """
    tol = 1e-9 * grid.spacing
    if mesh.circ_spacing > grid.spacing + tol or mesh.lat_spacing > grid.spacing + tol:
        raise ScmError(f"tire mesh spacing ({mesh.circ_spacing:.4g}, {mesh.lat_spacing:.4g}) m "
                       f"exceeds grid spacing {grid.spacing:.4g} m")
    fwd, lat, depth = mesh.vertices()
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    wx = pose.x + fwd * c - lat * s
    wy = pose.y + fwd * s + lat * c
    wz = pose.z - depth
    gi = np.rint(wx / grid.spacing).astype(np.int64)
    gj = np.rint(wy / grid.spacing).astype(np.int64)
    li, lj = gi - grid.offset[0], gj - grid.offset[1]
    nx, ny = grid.shape
    if li.min() < 0 or lj.min() < 0 or li.max() >= nx or lj.max() >= ny:
        raise ScmError(f"wheel at ({pose.x:.3f}, {pose.y:.3f}) is outside the grid window")

    flat = li * ny + lj
    zbuf = np.full(nx * ny, np.inf)
    np.minimum.at(zbuf, flat, wz)
    cells = np.unique(flat)
    z_min = zbuf[cells]
    rows, cols = cells // ny, cells % ny
    surface = grid.heights[rows, cols]
    touch = z_min <= surface + CONTACT_TOL
    if not touch.any():
        return ContactPatch.empty_patch()
    rows, cols, z_min = rows[touch], cols[touch], z_min[touch]
    original = surface[touch] + grid.permanent_sinkage[rows, cols]
    h = np.maximum(original - z_min, 0.0)

    # Column centres back in the wheel frame
    dx = (rows + grid.offset[0]) * grid.spacing - pose.x
    dy = (cols + grid.offset[1]) * grid.spacing - pose.y
    forward = dx * c + dy * s
    theta = np.arcsin(np.clip(forward / mesh.r, -1.0, 1.0))

    keys = cell_keys(rows + grid.offset[0], cols + grid.offset[1])
    order = np.argsort(keys, kind="stable")
    keys, h, theta, forward = keys[order], h[order], theta[order], forward[order]
    rows, cols = rows[order], cols[order]

    j = np.zeros(keys.size)
    j_y = np.zeros(keys.size)
    if previous is not None and not previous.empty:
        pos = np.searchsorted(previous.keys, keys)
        pos = np.minimum(pos, previous.keys.size - 1)
        kept = previous.keys[pos] == keys
        j[kept] = previous.j[pos[kept]]
        j_y[kept] = previous.j_y[pos[kept]]

    cell_area = grid.spacing ** 2
    area = np.full(keys.size, cell_area)
    footprint = keys.size * cell_area
    contour = _contour_length(rows, cols, grid.spacing)
    return ContactPatch(keys=keys, sinkage=h, theta=theta, forward=forward, area=area,
                        j=j, j_y=j_y, b_eff=2.0 * footprint / contour,
                        footprint_area=footprint, contour_length=contour)


# ── Shear accumulation and forces ─────────────────────────────────────────────

def rim_speed(wheel: WheelState) -> float:
    """Circumferential speed r*omega implied by the slip definition."""
    v_x = wheel.v * math.cos(wheel.beta)
    if wheel.s >= 0:
        if wheel.s >= 1:
            raise DomainError("slip of 1 needs an explicit wheel speed")
        return v_x / (1.0 - wheel.s)
    return v_x * (1.0 + wheel.s)


def step_shear_state(patch: ContactPatch, wheel: WheelState, dt: float,
                     yaw_rate: float = 0.0) -> ContactPatch:
    """Accumulate soil-relative slip velocity over dt on every contact column.

    Longitudinal: r*omega - v cos(beta). Lateral: v sin(beta) minus the
    wheel's yaw rotation at the column's forward offset.
    """
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if patch.empty:
        return patch
    slip_x = rim_speed(wheel) - wheel.v * math.cos(wheel.beta)
    slip_y = wheel.v * math.sin(wheel.beta) - yaw_rate * patch.forward
    return replace(patch, j=patch.j + slip_x * dt, j_y=patch.j_y + slip_y * dt)


@dataclass(frozen=True)
class PatchForces:
    F_x: float                             # along the wheel heading, N
    F_y: float                             # lateral in the wheel frame, N
    F_z: float                             # vertical, N


def patch_forces(patch: ContactPatch, terrain: TerrainParams) -> PatchForces:
    if patch.empty:
        return PatchForces(0.0, 0.0, 0.0)
    if not patch.b_eff > 0:
        raise ScmError("contact patch has no effective width")
    sigma = (terrain.k_c / patch.b_eff + terrain.k_phi) * np.power(patch.sinkage, terrain.n)
    tau_max = terrain.c + sigma * terrain.tan_phi
    j_abs = np.hypot(patch.j, patch.j_y)
    tau = tau_max * _shear_shape(j_abs, terrain.k, terrain.shear_curve)
    if np.any(tau > tau_max * (1.0 + 1e-12) + 1e-12):
        raise ScmError("shear stress exceeds the Mohr-Coulomb bound")
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(j_abs > 0, patch.j / j_abs, 0.0)
        uy = np.where(j_abs > 0, patch.j_y / j_abs, 0.0)
    tan_t = np.tan(patch.theta)
    tau_x, tau_y = tau * ux, tau * uy
    A = patch.area
    F_z = float(np.sum((sigma + tau_x * tan_t) * A))
    F_x = float(np.sum((tau_x - sigma * tan_t) * A))
    F_y = float(np.sum(tau_y * A / np.cos(patch.theta)))
    return PatchForces(F_x=F_x, F_y=F_y, F_z=F_z)


def scm_forces(patch: ContactPatch, wheel: WheelState, terrain: TerrainParams) -> TireForces:
    """Vertical force and wheel-frame lateral force summed over the patch."""
    f = patch_forces(patch, terrain)
    return TireForces(F_z=f.F_z, F_y=f.F_y)


# ── Configuration ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ScmConfig:
    spacing: float = DEFAULT_SPACING       # m
    window_length: float = 2.0             # m, along travel
    window_width: float = 1.0              # m
    arc_half: float = DEFAULT_ARC_HALF     # rad
    dt: float = PLANT_DT                   # s

    def __post_init__(self):
        if not self.spacing > 0 or not self.dt > 0:
            raise DomainError("scm spacing and dt must be > 0")
        if self.window_length <= 0 or self.window_width <= 0:
            raise DomainError("scm window dimensions must be > 0")

    def new_grid(self, center: Tuple[float, float] = (0.0, 0.0)) -> HeightGrid:
        return HeightGrid.flat(self.window_length, self.window_width, self.spacing, center)

    def mesh(self, geom: WheelGeometry) -> TireMeshConfig:
        return TireMeshConfig.for_grid(self.spacing, geom, self.arc_half)


# ── Vertical settlement ───────────────────────────────────────────────────────

@dataclass
class VerticalSettler:
    """Critically damped vertical degree of freedom carrying the wheel load."""
    load: float                            # N
    mass: float                            # kg
    damping: float                         # N s/m
    z: float                               # wheel centre height, m
    z_dot: float = 0.0

    @classmethod
    def for_wheel(cls, W: float, s: float, geom: WheelGeometry, terrain: TerrainParams,
                  ground: float = 0.0) -> "VerticalSettler":
        """Start at the Bekker sinkage with the stiffness dF_z/dh found there."""
        sol = solve_sinkage(WheelState(W=W, s=s, beta=0.0, v=0.0), geom, terrain, "gauss")
        d = 1e-5
        k_eff = (normal_force(sol.h + d, s, geom, terrain, "gauss")
                 - normal_force(max(sol.h - d, 0.0), s, geom, terrain, "gauss")) / (2 * d)
        mass = W / GRAVITY
        damping = 2.0 * math.sqrt(max(k_eff, 1.0) * mass)
        return cls(load=W, mass=mass, damping=damping, z=ground + geom.r - sol.h)

    def step(self, F_z: float, dt: float) -> float:
        acc = (F_z - self.load - self.damping * self.z_dot) / self.mass
        self.z_dot += dt * acc
        self.z += dt * self.z_dot
        return self.z


# ── Single-wheel test bed ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class SweepSpec:
    W: float                               # wheel load, N
    s: float                               # longitudinal slip
    v: float                               # carriage speed, m/s
    n: float                               # sinkage exponent
    beta_amplitude: float = 0.2            # rad
    frequency: float = 1.0                 # Hz
    duration: float = 2.0                  # recorded time, s
    settle: float = 0.5                    # settle phase before recording, s
    steer_window: float = 0.012            # s, window for the recorded steering step

    def __post_init__(self):
        if not self.W > 0 or not self.v > 0 or abs(self.s) >= 1:
            raise DomainError(f"invalid sweep point W={self.W} s={self.s} v={self.v}")
        if not math.isfinite(self.beta_amplitude) or abs(self.beta_amplitude) >= math.pi / 2:
            raise DomainError("beta amplitude must be finite and below pi/2")
        if self.frequency <= 0 or self.duration <= 0 or self.settle < 0:
            raise DomainError("sweep frequency and duration must be > 0, settle >= 0")

    def beta(self, t):
        t = np.asarray(t, dtype=float)
        val = self.beta_amplitude * np.sin(2.0 * math.pi * self.frequency * t)
        return np.where(t >= 0, val, 0.0)


@dataclass
class SweepTrace:
    spec: SweepSpec
    t: np.ndarray
    beta: np.ndarray
    delta_step: np.ndarray
    F_z: np.ndarray
    F_y: np.ndarray
    h_max: np.ndarray
    b_eff: np.ndarray
    meta: Dict[str, float] = field(default_factory=dict)

    def rows(self) -> np.ndarray:
        """Rows in the sweep CSV column order."""
        n = self.t.size
        sp = self.spec
        return np.column_stack([self.t, np.full(n, sp.W), np.full(n, sp.s), self.beta,
                                np.full(n, sp.v), self.F_z, self.F_y, self.h_max, self.b_eff])

    def last_period(self) -> "SweepTrace":
        """The final full steering period."""
        period = 1.0 / self.spec.frequency
        keep = self.t >= self.t[-1] - period + 0.5 * (self.t[1] - self.t[0] if self.t.size > 1 else 0)
        return replace(self, t=self.t[keep], beta=self.beta[keep],
                       delta_step=self.delta_step[keep], F_z=self.F_z[keep], F_y=self.F_y[keep],
                       h_max=self.h_max[keep], b_eff=self.b_eff[keep])


def run_sweep(spec: SweepSpec, terrain: TerrainParams, geom: WheelGeometry = WheelGeometry(),
              scm: ScmConfig = ScmConfig()) -> SweepTrace:
    """Drive one wheel along +x at constant slip and speed while its heading sweeps beta(t).

    The heading equals beta because the carriage velocity points along +x.
    """
    terrain = terrain.with_exponent(spec.n)
    dt = scm.dt
    grid = scm.new_grid()
    mesh = scm.mesh(geom)
    settler = VerticalSettler.for_wheel(spec.W, spec.s, geom, terrain)
    n_settle = int(round(spec.settle / dt))
    n_total = n_settle + int(round(spec.duration / dt)) + 1
    lag = int(round(spec.steer_window / dt))

    times = (np.arange(n_total) - n_settle) * dt
    betas = spec.beta(times)
    out = {k: np.zeros(n_total) for k in ("F_z", "F_y", "h_max", "b_eff")}
    x = 0.0
    patch: Optional[ContactPatch] = None
    for k in range(n_total):
        beta = float(betas[k])
        yaw_rate = (float(betas[k + 1]) - beta) / dt if k + 1 < n_total else \
            (beta - float(betas[k - 1])) / dt
        grid.recenter(x, 0.0)
        patch = detect_contact(WheelPose(x, 0.0, settler.z, beta), mesh, grid, patch)
        wheel = WheelState(W=spec.W, s=spec.s, beta=beta, v=spec.v)
        patch = step_shear_state(patch, wheel, dt, yaw_rate)
        f = patch_forces(patch, terrain)
        grid.apply_patch(patch)
        out["F_z"][k], out["F_y"][k] = f.F_z, f.F_y
        out["h_max"][k], out["b_eff"][k] = patch.h_max, patch.b_eff
        settler.step(f.F_z, dt)
        x += spec.v * dt

    rec = slice(n_settle, n_total)
    delta_step = betas - np.concatenate([np.zeros(lag), betas[:-lag]]) if lag else np.zeros(n_total)
    log.debug("Sweep W=%.0f s=%.3f v=%.2f n=%.3f: mean Fz %.1f N, peak |Fy| %.1f N",
              spec.W, spec.s, spec.v, spec.n, out["F_z"][rec].mean(),
              np.abs(out["F_y"][rec]).max())
    return SweepTrace(spec=spec, t=times[rec], beta=betas[rec], delta_step=delta_step[rec],
                      F_z=out["F_z"][rec], F_y=out["F_y"][rec], h_max=out["h_max"][rec],
                      b_eff=out["b_eff"][rec], meta={"spacing": scm.spacing, "dt": dt})


def grid_refinement(spec: SweepSpec, terrain: TerrainParams, geom: WheelGeometry = WheelGeometry(),
                    spacings: Tuple[float, ...] = (0.02, 0.01)) -> List[Dict[str, float]]:
    """Mean F_z and peak |F_y| of the same sweep at each grid spacing.

    Each row after the first carries the relative change from the previous spacing.
    """
    rows: List[Dict[str, float]] = []
    for sp in spacings:
        trace = run_sweep(spec, terrain, geom, ScmConfig(spacing=sp)).last_period()
        row = {"spacing": sp, "mean_Fz": float(trace.F_z.mean()),
               "peak_Fy": float(np.abs(trace.F_y).max())}
        if rows:
            prev = rows[-1]
            row["dFz"] = abs(row["mean_Fz"] - prev["mean_Fz"]) / abs(prev["mean_Fz"])
            row["dFy"] = abs(row["peak_Fy"] - prev["peak_Fy"]) / max(abs(prev["peak_Fy"]), 1e-12)
        rows.append(row)
    return rows
