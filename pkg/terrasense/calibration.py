"""
calibration.py — TerraSense
Fitting the surrogate's correction functions against the grid oracle:

    run_design        one SCM sweep per design point (optionally in a process pool)
    extract_factors   per-sweep (g1, g2, g3) for each hysteresis branch
    fit_gfuns         separable product-form factor functions per slip range and branch
    validate_surrogate  random held-out sweeps, surrogate vs oracle error report

Per-sweep extraction uses variable projection: g1 enters the surrogate
linearly and is solved in closed form, (g2, log g3) are searched on a grid and
refined with scipy's least_squares.
"""

from __future__ import annotations
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .coeffs import FACTOR_SPECS, FactorFunction, GFunCoeffs, GFunSet, G_NAMES
from .constants import (
    BRANCH_LOWER, BRANCH_UPPER, BRANCHES, DESIGN_BOUNDS, LOGGER_NAME, SLIP_BOUNDS, SLIP_RANGES,
)
from .errors import CalibrationError, ConfigError, NumericalError
from .scm import ScmConfig, SweepSpec, SweepTrace, run_sweep
from .surrogate import (
    SurrogateContact, branch_mask, g_values, lateral_force_with_factors, select_slip_range,
    surrogate_contact,
)
from .terrain import TerrainParams, WheelGeometry

log = logging.getLogger(LOGGER_NAME)

G2_GRID = np.linspace(-100.0, 400.0, 26)
G3_GRID = np.geomspace(1e-3, 2.0, 25)
MAX_REL_RESIDUAL = 0.25
ALS_ROUNDS = 3


# ── Design ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DesignPoint:
    slip_range: int
    W: float
    s: float
    v: float
    n: float


def _levels(bounds: Tuple[float, float], count: int) -> Tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(bounds[0], bounds[1], count))


def range_slip_bounds(slip_range: int) -> Tuple[float, float]:
    lo, hi, _, _ = SLIP_RANGES[slip_range]
    return max(lo, SLIP_BOUNDS[0]), min(hi, SLIP_BOUNDS[1])


@dataclass(frozen=True)
class SweepDesign:
    n_loads: int = 4
    n_slips: int = 5
    n_speeds: int = 5
    n_exponents: int = 7
    ranges: Tuple[int, ...] = (1, 2, 3, 4)
    loads: Tuple[float, ...] = ()          # explicit levels override the counts
    speeds: Tuple[float, ...] = ()
    exponents: Tuple[float, ...] = ()
    beta_amplitude: float = 0.2            # rad
    frequency: float = 1.0                 # Hz
    duration: float = 1.5                  # s, last full period is used
    settle: float = 0.5                    # s

    def __post_init__(self):
        for r in self.ranges:
            if r not in SLIP_RANGES:
                raise ConfigError(f"unknown slip range {r}")
        for key, levels in (("Fz", self.loads), ("v", self.speeds), ("n", self.exponents)):
            lo, hi = DESIGN_BOUNDS[key]
            bad = [x for x in levels if not lo <= x <= hi]
            if bad:
                raise ConfigError(f"design {key} levels {bad} outside the development box [{lo}, {hi}]")
        counts = (self.n_loads, self.n_slips, self.n_speeds, self.n_exponents)
        if min(counts) < 1:
            raise ConfigError("design level counts must be >= 1")
        if self.duration < 1.0 / self.frequency:
            raise ConfigError("sweep duration must cover at least one steering period")

    @classmethod
    def desk(cls, **overrides) -> "SweepDesign":
        """Reduced grid that still determines every printed factor degree."""
        base = dict(n_loads=3, n_slips=5, n_speeds=3, n_exponents=6)
        base.update(overrides)
        return cls(**base)

    def load_levels(self) -> Tuple[float, ...]:
        return self.loads or _levels(DESIGN_BOUNDS["Fz"], self.n_loads)

    def speed_levels(self) -> Tuple[float, ...]:
        return self.speeds or _levels(DESIGN_BOUNDS["v"], self.n_speeds)

    def exponent_levels(self) -> Tuple[float, ...]:
        return self.exponents or _levels(DESIGN_BOUNDS["n"], self.n_exponents)

    def slip_levels(self, slip_range: int) -> Tuple[float, ...]:
        """Cell centres of the range, so open interval ends are never sampled."""
        lo, hi = range_slip_bounds(slip_range)
        step = (hi - lo) / self.n_slips
        return tuple(lo + (i + 0.5) * step for i in range(self.n_slips))

    def points(self) -> List[DesignPoint]:
        pts = []
        for r in self.ranges:
            for W in self.load_levels():
                for s in self.slip_levels(r):
                    for v in self.speed_levels():
                        for n in self.exponent_levels():
                            pts.append(DesignPoint(r, W, s, v, n))
        return pts

    def sweep_spec(self, p: DesignPoint) -> SweepSpec:
        return SweepSpec(W=p.W, s=p.s, v=p.v, n=p.n, beta_amplitude=self.beta_amplitude,
                         frequency=self.frequency, duration=self.duration, settle=self.settle)


@dataclass
class SweepRecord:
    point: DesignPoint
    trace: Optional[SweepTrace] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.trace is not None


def _run_point(task: Tuple[DesignPoint, SweepSpec, TerrainParams, WheelGeometry, ScmConfig]
               ) -> SweepRecord:
    point, spec, terrain, geom, scm = task
    try:
        return SweepRecord(point=point, trace=run_sweep(spec, terrain, geom, scm))
    except NumericalError as e:
        return SweepRecord(point=point, error=str(e))


def run_design(design: SweepDesign, terrain: TerrainParams, geom: WheelGeometry = WheelGeometry(),
               scm: ScmConfig = ScmConfig(), workers: int = 1) -> List[SweepRecord]:
    """One oracle sweep per design point, in design order. Failed sweeps are recorded."""
    tasks = [(p, design.sweep_spec(p), terrain, geom, scm) for p in design.points()]
    log.info("Running %d calibration sweeps on %s (%d worker%s)", len(tasks), terrain.name,
             workers, "" if workers == 1 else "s")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_point, tasks, chunksize=4))
    else:
        records = [_run_point(t) for t in tasks]
    failed = [r for r in records if not r.ok]
    for r in failed:
        log.warning("Sweep failed at %s: %s", r.point, r.error)
    return records


# ── Per-sweep factor extraction ───────────────────────────────────────────────

@dataclass(frozen=True)
class BranchFit:
    g1: float
    g2: float
    g3: float
    residual: float                        # RMS error / peak |F_y|
    ok: bool
    message: str = ""


@dataclass
class CorrectionSample:
    point: DesignPoint
    fits: Dict[str, BranchFit] = field(default_factory=dict)

    def inputs(self) -> Dict[str, float]:
        return {"Fz": self.point.W, "s": self.point.s, "v": self.point.v, "n": self.point.n}


def _fit_branch(contact: SurrogateContact, s: float, beta: np.ndarray, dstep: np.ndarray,
                F: np.ndarray, geom: WheelGeometry, terrain: TerrainParams) -> BranchFit:
    peak = float(np.max(np.abs(F))) if F.size else 0.0
    if F.size < 4 or not peak > 0:
        return BranchFit(0.0, 0.0, terrain.k, math.inf, False, "no lateral force on this branch")

    def project(g2: float, g3: float) -> Tuple[float, np.ndarray]:
        phi = lateral_force_with_factors(contact, s, beta, dstep, 1.0, g2, g3, geom, terrain)
        den = float(phi @ phi)
        g1 = float(phi @ F) / den if den > 0 else 0.0
        return g1, F - g1 * phi

    def cost(g2: float, g3: float) -> float:
        _, r = project(g2, g3)
        return float(r @ r)

    # Grid start plus the nominal (g2, g3) = (1, k) start
    grid = [(cost(a, b), a, b) for a in G2_GRID for b in G3_GRID]
    starts = [min(grid)[1:], (1.0, terrain.k)]
    best = None
    for g2_0, g3_0 in starts:
        res = optimize.least_squares(
            lambda x: project(x[0], math.exp(x[1]))[1] / peak,
            x0=[g2_0, math.log(g3_0)], method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
            max_nfev=400)
        if best is None or res.cost < best.cost:
            best = res
    g2, g3 = float(best.x[0]), float(math.exp(best.x[1]))
    g1, r = project(g2, g3)
    residual = float(np.sqrt(np.mean(r ** 2)) / peak)
    ok = bool(best.status > 0 and np.isfinite([g1, g2, g3]).all() and g3 > 0
              and residual < MAX_REL_RESIDUAL)
    msg = "" if ok else f"least squares status {best.status}, residual {residual:.3g}"
    return BranchFit(g1=g1, g2=g2, g3=g3, residual=residual, ok=ok, message=msg)


def extract_factors(loop: SweepTrace, point: DesignPoint, terrain: TerrainParams,
                    geom: WheelGeometry = WheelGeometry()) -> CorrectionSample:
    """Fit (g1, g2, g3) per branch so the surrogate reproduces the loop's F_y(beta)."""
    terrain = terrain.with_exponent(point.n)
    contact = surrogate_contact(point.W, point.s, point.n, geom, terrain)
    upper = branch_mask(loop.beta, loop.delta_step)
    sample = CorrectionSample(point=point)
    for branch, sel in ((BRANCH_UPPER, upper), (BRANCH_LOWER, ~upper)):
        sample.fits[branch] = _fit_branch(contact, point.s, loop.beta[sel], loop.delta_step[sel],
                                          loop.F_y[sel], geom, terrain)
    return sample


def synthetic_loop(point: DesignPoint, g: Tuple[float, float, float], terrain: TerrainParams,
                   geom: WheelGeometry = WheelGeometry(), spec: Optional[SweepSpec] = None,
                   dt: float = 0.002) -> SweepTrace:
    """One steering period of surrogate forces at fixed (g1, g2, g3)."""
    spec = spec or SweepSpec(W=point.W, s=point.s, v=point.v, n=point.n, duration=1.0)
    terrain = terrain.with_exponent(point.n)
    t = np.arange(0.0, 1.0 / spec.frequency, dt)
    beta = spec.beta(t)
    dstep = beta - spec.beta(t - spec.steer_window)
    contact = surrogate_contact(point.W, point.s, point.n, geom, terrain)
    F = lateral_force_with_factors(contact, point.s, beta, dstep, g[0], g[1], g[2], geom, terrain)
    n = t.size
    return SweepTrace(spec=spec, t=t, beta=beta, delta_step=dstep, F_z=np.full(n, point.W),
                      F_y=F, h_max=np.full(n, float(contact.h[0])), b_eff=np.full(n, geom.b))


# ── Factor-function fitting ───────────────────────────────────────────────────

def _unit_factor(name: str, inp: str, form: str, degree: int) -> FactorFunction:
    if form == "polynomial":
        coeffs = (0.0,) * degree + (1.0,)
    elif form == "power":
        coeffs = (1.0, 0.0)
    else:
        coeffs = (0.0, 1.0)
    return FactorFunction(name=name, input=inp, form=form, coeffs=coeffs)


def default_layout() -> List[FactorFunction]:
    return [_unit_factor(name, inp, form, deg) for name, (_g, inp, form, deg) in FACTOR_SPECS.items()]


def layout_of(gset: GFunSet) -> List[FactorFunction]:
    """Unit factors with the same names, forms and degrees as an existing set."""
    return [_unit_factor(f.name, f.input, f.form, f.n_params - 1 if f.form == "polynomial" else 1)
            for f in gset.factors.values()]


def _fit_factor(f: FactorFunction, x: np.ndarray, target: np.ndarray, P: np.ndarray
                ) -> FactorFunction:
    """Least-squares fit of target ~ P * f(x) keeping f's form and degree."""
    use = (np.abs(P) > 0) & np.isfinite(P) & np.isfinite(target)
    x, target, P = x[use], target[use], P[use]
    n_par = f.n_params
    if x.size < 2 * n_par:
        raise CalibrationError(f"{x.size} usable samples for {n_par} parameters (need {2 * n_par})",
                               factor=f.name)
    levels = np.unique(x).size
    if f.form in ("polynomial", "affine"):
        if levels < n_par:
            raise CalibrationError(f"{levels} distinct input levels cannot determine "
                                   f"{n_par} coefficients", factor=f.name)
        A = P[:, None] * np.vander(x, n_par)
        coef, _res, rank, _sv = np.linalg.lstsq(A, target, rcond=None)
        if rank < n_par:
            raise CalibrationError("rank-deficient design", factor=f.name)
        return replace(f, coeffs=tuple(coef), scale=1.0)

    if levels < 2:
        raise CalibrationError("needs at least two distinct input levels", factor=f.name)
    ratio = target / P
    if f.form == "power":
        if np.any(x <= 0):
            raise CalibrationError("power form needs positive inputs", factor=f.name)
        if np.all(ratio > 0):
            p, log_a = np.polyfit(np.log(x), np.log(ratio), 1)
            x0 = [math.exp(log_a), p]
        else:
            x0 = [float(np.mean(ratio)), 0.0]

        def model(c):
            return P * c[0] * np.power(x, c[1]) - target
    else:
        pos = ratio > 0
        if np.unique(x[pos]).size >= 2:
            A = P[pos, None] * np.vander(x[pos], 2)
            x0 = list(np.linalg.lstsq(A, target[pos], rcond=None)[0])
        else:
            x0 = [0.0, float(np.mean(ratio))]

        def model(c):
            return P * np.maximum(c[0] * x + c[1], 0.0) - target
    res = optimize.least_squares(model, x0=x0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14,
                                 max_nfev=2000)
    return replace(f, coeffs=tuple(float(c) for c in res.x), scale=1.0)


def _group_product(factors: Sequence[FactorFunction], inputs: Dict[str, np.ndarray],
                   skip: str = "") -> np.ndarray:
    out = np.ones_like(next(iter(inputs.values())), dtype=float)
    for f in factors:
        if f.name != skip:
            out = out * f(inputs[f.input])
    return out


def design_centre(slip_range: int) -> Dict[str, float]:
    lo, hi = range_slip_bounds(slip_range)
    c = {k: 0.5 * (b[0] + b[1]) for k, b in DESIGN_BOUNDS.items()}
    c["s"] = 0.5 * (lo + hi)
    return c


def normalize(factors: List[FactorFunction], centre: Dict[str, float],
              anchors: Optional[Dict[str, float]] = None) -> List[FactorFunction]:
    """Pin every non-leading factor of each g to its anchor value at the design centre.

    The leading factor (first of its g) absorbs the scale, so the products are
    unchanged. Anchors default to 1.
    """
    anchors = anchors or {}
    out = list(factors)
    for g in G_NAMES:
        idx = [i for i, f in enumerate(out) if f.group == g]
        if not idx:
            continue
        lead = idx[0]
        carry = 1.0
        for i in idx[1:]:
            f = out[i]
            val = float(f(centre[f.input]))
            want = anchors.get(f.name, 1.0)
            if val == 0 or want == 0:
                continue
            c = want / val
            out[i] = replace(f, scale=f.scale * c).expanded()
            carry *= c
        out[lead] = replace(out[lead], scale=out[lead].scale / carry).expanded()
    return out


def fit_set(samples: Sequence[CorrectionSample], slip_range: int, branch: str,
            layout: Optional[List[FactorFunction]] = None, rounds: int = ALS_ROUNDS,
            reference: Optional[GFunSet] = None) -> Tuple[GFunSet, Dict[str, float]]:
    """Alternating least squares for one (range, branch); returns the set and per-g RMS."""
    used = [sm for sm in samples if sm.point.slip_range == slip_range
            and branch in sm.fits and sm.fits[branch].ok]
    if not used:
        raise CalibrationError(f"no usable samples for slip range {slip_range}, {branch} curve")
    if layout is None:
        layout = layout_of(reference) if reference is not None else default_layout()
    inputs = {k: np.array([sm.inputs()[k] for sm in used]) for k in ("Fz", "s", "v", "n")}
    targets = {g: np.array([getattr(sm.fits[branch], g) for sm in used]) for g in G_NAMES}

    fitted: List[FactorFunction] = []
    rms: Dict[str, float] = {}
    for g in G_NAMES:
        group = [f for f in layout if f.group == g]
        for _ in range(max(rounds, 1)):
            for i, f in enumerate(group):
                P = _group_product(group, inputs, skip=f.name)
                group[i] = _fit_factor(f, inputs[f.input], targets[g], P)
        rms[g] = float(np.sqrt(np.mean((_group_product(group, inputs) - targets[g]) ** 2)))
        fitted += group

    anchors = None
    if reference is not None:
        centre = design_centre(slip_range)
        anchors = {f.name: float(f(centre[f.input])) for f in reference.factors.values()}
    fitted = normalize(fitted, design_centre(slip_range), anchors)
    gset = GFunSet(slip_range=slip_range, branch=branch, factors={f.name: f for f in fitted})
    return gset, rms


def check_positive_g3(gset: GFunSet, points: int = 7) -> float:
    """Smallest g3 over a dense grid of the range's design box; raises if not positive."""
    lo, hi = range_slip_bounds(gset.slip_range)
    axes = {
        "s": np.linspace(lo, hi, points),
        "Fz": np.linspace(*DESIGN_BOUNDS["Fz"], points),
        "v": np.linspace(*DESIGN_BOUNDS["v"], 3),
        "n": np.linspace(*DESIGN_BOUNDS["n"], points),
    }
    mesh = np.meshgrid(*axes.values(), indexing="ij")
    inputs = {k: m.ravel() for k, m in zip(axes, mesh)}
    g3_min = float(np.min(gset.evaluate("g3", inputs)))
    if not g3_min > 0:
        raise CalibrationError(f"fitted g3 reaches {g3_min:.4g} on slip range {gset.slip_range}, "
                               f"{gset.branch} curve", factor="g3")
    return g3_min


def fit_gfuns(samples: Sequence[CorrectionSample], terrain: str,
              layout: Optional[List[FactorFunction]] = None, rounds: int = ALS_ROUNDS,
              references: Optional[GFunCoeffs] = None, check_g3: bool = True,
              ranges: Optional[Iterable[int]] = None) -> GFunCoeffs:
    """Fit every (range, branch) present in the samples."""
    ranges = sorted(set(ranges) if ranges is not None
                    else {sm.point.slip_range for sm in samples})
    coeffs = GFunCoeffs(terrain=terrain, calibrated=True, source="calibration")
    fit_rms = {}
    for r in ranges:
        for b in BRANCHES:
            ref = references.sets.get((r, b)) if references is not None else None
            lay = [replace(f) for f in layout] if layout is not None else None
            gset, rms = fit_set(samples, r, b, lay, rounds, ref)
            if check_g3:
                check_positive_g3(gset)
            coeffs = coeffs.with_set(gset)
            fit_rms[f"{r}/{b}"] = rms
            log.info("Fitted slip range %d %s curve: rms g1=%.3g g2=%.3g g3=%.3g",
                     r, b, rms["g1"], rms["g2"], rms["g3"])
    coeffs.meta["fit_rms"] = fit_rms
    return coeffs


def holdout_split(samples: Sequence[CorrectionSample], fraction: float = 0.2, seed: int = 0
                  ) -> Tuple[List[CorrectionSample], List[CorrectionSample]]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_test = int(round(fraction * len(samples)))
    test = set(order[:n_test].tolist())
    train = [sm for i, sm in enumerate(samples) if i not in test]
    return train, [samples[i] for i in sorted(test)]


def factor_rms(coeffs: GFunCoeffs, samples: Sequence[CorrectionSample]) -> Dict[str, float]:
    """RMS of fitted g against the per-sweep factors, pooled over ranges and branches."""
    errs: Dict[str, List[float]] = {g: [] for g in G_NAMES}
    for sm in samples:
        for b, fit in sm.fits.items():
            if not fit.ok or (sm.point.slip_range, b) not in coeffs.sets:
                continue
            gset = coeffs.sets[(sm.point.slip_range, b)]
            inputs = {k: np.array(v) for k, v in sm.inputs().items()}
            for g in G_NAMES:
                errs[g].append(float(gset.evaluate(g, inputs)) - getattr(fit, g))
    return {g: float(np.sqrt(np.mean(np.square(e)))) if e else math.nan for g, e in errs.items()}


# ── Validation ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ValidationDesign:
    n_points: int = 200
    seed: int = 1
    beta_amplitude: float = 0.2
    frequency: float = 1.0
    duration: float = 1.5
    settle: float = 0.5

    def points(self) -> List[DesignPoint]:
        rng = np.random.default_rng(self.seed)
        pts = []
        for _ in range(self.n_points):
            W = rng.uniform(*DESIGN_BOUNDS["Fz"])
            s = rng.uniform(*SLIP_BOUNDS)
            v = rng.uniform(*DESIGN_BOUNDS["v"])
            n = rng.uniform(*DESIGN_BOUNDS["n"])
            pts.append(DesignPoint(select_slip_range(s), W, s, v, n))
        return pts

    def sweep_spec(self, p: DesignPoint) -> SweepSpec:
        return SweepSpec(W=p.W, s=p.s, v=p.v, n=p.n, beta_amplitude=self.beta_amplitude,
                         frequency=self.frequency, duration=self.duration, settle=self.settle)


@dataclass
class ValidationRow:
    point: DesignPoint
    peak_fy: float
    rms_surrogate: float
    rms_base: float
    surrogate_us: float                    # mean time per surrogate force, microseconds

    @property
    def rel_surrogate(self) -> float:
        return self.rms_surrogate / self.peak_fy if self.peak_fy > 0 else math.nan

    @property
    def rel_base(self) -> float:
        return self.rms_base / self.peak_fy if self.peak_fy > 0 else math.nan

    def as_list(self) -> list:
        p = self.point
        return [p.W, p.s, p.v, p.n, self.peak_fy, self.rms_surrogate, self.rms_base,
                self.rel_surrogate, self.rel_base, self.surrogate_us]


@dataclass
class ValidationReport:
    rows: List[ValidationRow] = field(default_factory=list)
    failures: List[SweepRecord] = field(default_factory=list)

    @property
    def aggregate_surrogate(self) -> float:
        vals = [r.rel_surrogate for r in self.rows if math.isfinite(r.rel_surrogate)]
        return float(np.sqrt(np.mean(np.square(vals)))) if vals else math.nan

    @property
    def aggregate_base(self) -> float:
        vals = [r.rel_base for r in self.rows if math.isfinite(r.rel_base)]
        return float(np.sqrt(np.mean(np.square(vals)))) if vals else math.nan


def surrogate_loop(coeffs: GFunCoeffs, point: DesignPoint, beta: np.ndarray, dstep: np.ndarray,
                   terrain: TerrainParams, geom: WheelGeometry = WheelGeometry()) -> np.ndarray:
    """Surrogate F_y along a recorded (beta, d_delta) series at one operating point."""
    terrain = terrain.with_exponent(point.n)
    contact = surrogate_contact(point.W, point.s, point.n, geom, terrain)
    g1, g2, g3 = g_values(point.W, point.s, point.v, point.n, beta, dstep, coeffs)
    return lateral_force_with_factors(contact, point.s, beta, dstep, g1, g2, g3, geom, terrain)


def validate_surrogate(coeffs: GFunCoeffs, design: ValidationDesign, terrain: TerrainParams,
                       geom: WheelGeometry = WheelGeometry(), scm: ScmConfig = ScmConfig(),
                       workers: int = 1, records: Optional[List[SweepRecord]] = None
                       ) -> ValidationReport:
    """Compare surrogate and uncorrected base model against fresh oracle sweeps."""
    if design.n_points == 0:
        return ValidationReport()
    if not coeffs.is_complete():
        raise CalibrationError("validation needs coefficients for all four slip ranges")
    if records is None:
        tasks = [(p, design.sweep_spec(p), terrain, geom, scm) for p in design.points()]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(_run_point, tasks, chunksize=4))
        else:
            records = [_run_point(t) for t in tasks]
    base = GFunCoeffs.identity(terrain.name, terrain.k)
    report = ValidationReport()
    for rec in records:
        if not rec.ok:
            report.failures.append(rec)
            continue
        loop = rec.trace.last_period()
        t0 = time.perf_counter()
        F_s = surrogate_loop(coeffs, rec.point, loop.beta, loop.delta_step, terrain, geom)
        per_call = (time.perf_counter() - t0) / max(loop.t.size, 1)
        F_b = surrogate_loop(base, rec.point, loop.beta, loop.delta_step, terrain, geom)
        report.rows.append(ValidationRow(
            point=rec.point, peak_fy=float(np.max(np.abs(loop.F_y))),
            rms_surrogate=float(np.sqrt(np.mean((F_s - loop.F_y) ** 2))),
            rms_base=float(np.sqrt(np.mean((F_b - loop.F_y) ** 2))),
            surrogate_us=1e6 * per_call))
    log.info("Validation on %d sweeps: surrogate %.3f, base %.3f (RMS / peak |Fy|), %d failed",
             len(report.rows), report.aggregate_surrogate, report.aggregate_base,
             len(report.failures))
    return report


# ── Pipeline ──────────────────────────────────────────────────────────────────

@dataclass
class CalibrationResult:
    coeffs: GFunCoeffs
    samples: List[CorrectionSample]
    records: List[SweepRecord]
    validation: ValidationReport


def calibration_rows(samples: Sequence[CorrectionSample]) -> List[list]:
    rows = []
    for sm in samples:
        p = sm.point
        for b in BRANCHES:
            fit = sm.fits.get(b)
            if fit is None:
                continue
            rows.append([p.slip_range, b, p.W, p.s, p.v, p.n, fit.g1, fit.g2, fit.g3,
                         fit.residual, int(fit.ok)])
    return rows


def calibrate(design: SweepDesign, terrain: TerrainParams, geom: WheelGeometry = WheelGeometry(),
              scm: ScmConfig = ScmConfig(), validation: Optional[ValidationDesign] = None,
              workers: int = 1) -> CalibrationResult:
    """run_design -> extract_factors -> fit_gfuns -> validate_surrogate."""
    try:
        records = run_design(design, terrain, geom, scm, workers)
    except NumericalError as e:
        raise e.with_stage("run_design")
    samples = []
    for rec in records:
        if rec.ok:
            try:
                samples.append(extract_factors(rec.trace.last_period(), rec.point, terrain, geom))
            except NumericalError as e:
                log.warning("Factor extraction failed at %s: %s", rec.point, e)
    n_bad = sum(1 for sm in samples for f in sm.fits.values() if not f.ok)
    log.info("Extracted factors from %d sweeps (%d branch fits flagged)", len(samples), n_bad)
    try:
        coeffs = fit_gfuns(samples, terrain.name, ranges=design.ranges)
    except NumericalError as e:
        raise e.with_stage("fit_gfuns")
    coeffs.meta.update({
        "design": {"loads": list(design.load_levels()), "speeds": list(design.speed_levels()),
                   "exponents": list(design.exponent_levels()),
                   "slips": {str(r): list(design.slip_levels(r)) for r in design.ranges}},
        "wheel": {"r": geom.r, "b": geom.b},
        "scm_spacing": scm.spacing,
        "sweeps": len(records),
        "failed_sweeps": sum(1 for r in records if not r.ok),
    })
    coeffs.meta["factor_rms"] = factor_rms(coeffs, samples)
    log.info("Factor RMS over all sweeps: g1=%.3g g2=%.3g g3=%.3g",
             *(coeffs.meta["factor_rms"][g] for g in G_NAMES))
    report = ValidationReport()
    if validation is not None and coeffs.is_complete():
        try:
            report = validate_surrogate(coeffs, validation, terrain, geom, scm, workers)
        except NumericalError as e:
            raise e.with_stage("validate_surrogate")
    return CalibrationResult(coeffs=coeffs, samples=samples, records=records, validation=report)
