# TerraSense — run configuration
# INI files read with configparser. Each section maps onto a dataclass; every
# key has a default and unknown keys are rejected with their line number.
#
#   [terrain]   preset plus field overrides (k_c, k_phi, n, k, c, phi, a0, a1, ...)
#   [wheel]     r, b
#   [vehicle]   mass, yaw_inertia, l_f, l_r, wheels_per_axle
#   [sweep]     single-wheel test bed point for `sweep`
#   [design]    calibration grid for `calibrate`
#   [scenario]  plant truth, drive profile and estimator setup for `estimate`
#   [ukf]       filter tuning
#   [scm]       oracle grid

from __future__ import annotations
import configparser
import math
import os
import re
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

from .calibration import SweepDesign, ValidationDesign
from .errors import ConfigError, DomainError
from .estimator import EstimatorConfig
from .plant import PlantConfig
from .presets import TERRAIN_PRESETS, get_terrain_preset, normalize_preset_name
from .scm import ScmConfig, SweepSpec
from .terrain import TerrainParams, WheelGeometry
from .ukf import UkfConfig, default_p0, default_q, default_r
from .vehicle import DriveProfile, VehicleParams


# ── Section dataclasses ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class TerrainSection:
    preset: str = "clay"
    k_c: Optional[float] = None
    k_phi: Optional[float] = None
    n: Optional[float] = None
    k: Optional[float] = None
    c: Optional[float] = None
    phi: Optional[float] = None            # rad
    a0: Optional[float] = None
    a1: Optional[float] = None
    lambda_ratio: Optional[float] = None
    shear_curve: Optional[str] = None

    def build(self) -> TerrainParams:
        overrides = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "preset"}
        return get_terrain_preset(self.preset, **overrides)


@dataclass(frozen=True)
class WheelSection:
    r: float = 0.45                        # m
    b: float = 0.25                        # m


@dataclass(frozen=True)
class VehicleSection:
    mass: float = 1400.0                   # kg, keeps the per-wheel load inside the design box
    yaw_inertia: float = 2300.0            # kg m^2
    l_f: float = 1.6                       # m
    l_r: float = 1.6                       # m
    wheels_per_axle: int = 2


@dataclass(frozen=True)
class SweepSection:
    W: float = 2000.0                      # N
    s: float = 0.1
    v: float = 5.0                         # m/s
    n: Optional[float] = None              # defaults to the terrain's exponent
    beta_amplitude: float = 0.2            # rad
    frequency: float = 1.0                 # Hz
    duration: float = 2.0                  # s
    settle: float = 0.5                    # s


@dataclass(frozen=True)
class DesignSection:
    scale: str = "desk"                    # desk | full
    loads: Tuple[float, ...] = ()
    speeds: Tuple[float, ...] = ()
    exponents: Tuple[float, ...] = ()
    ranges: Tuple[int, ...] = (1, 2, 3, 4)
    duration: float = 1.5                  # s per sweep
    workers: int = 1
    validation_points: int = 200
    validation_seed: int = 1


@dataclass(frozen=True)
class ScenarioSection:
    plant: str = "scm"                     # scm | model
    n_f: float = 0.5                       # plant truth
    n_r: float = 0.5
    n_f0: float = 0.7                      # estimator initial guesses
    n_r0: float = 0.7
    duration: float = 30.0                 # s
    speed_min: float = 3.0                 # m/s
    speed_max: float = 8.0
    speed_period: float = 20.0             # s
    steer_amplitude: float = 0.1           # rad
    steer_period: float = 3.0              # s
    drive_slip: float = 0.1
    ax_source: str = "command"             # command | measured
    coefficients: str = ""                 # path; empty searches the coefficient dirs
    horizon_stride: float = 0.5            # s between prediction restarts


@dataclass(frozen=True)
class UkfSection:
    alpha: float = 0.1
    kappa: float = 0.0
    zeta: float = 2.0
    p0_n: float = 0.04                     # initial variance of each exponent
    q_n: float = 1e-6                      # process noise on each exponent
    q_scale: float = 1.0                   # multiplies the vehicle-state process noise
    r_scale: float = 1.0                   # multiplies the sensor variances


@dataclass(frozen=True)
class ScmSection:
    spacing: float = 0.01                  # m
    window_length: float = 2.0             # m
    window_width: float = 1.0              # m
    arc_half: float = 0.7                  # rad


SECTIONS: Dict[str, type] = {
    "terrain": TerrainSection,
    "wheel": WheelSection,
    "vehicle": VehicleSection,
    "sweep": SweepSection,
    "design": DesignSection,
    "scenario": ScenarioSection,
    "ukf": UkfSection,
    "scm": ScmSection,
}

DESIGN_SCALES = ("desk", "full")


# ── Parsed configuration ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class RunConfig:
    terrain: TerrainSection = field(default_factory=TerrainSection)
    wheel: WheelSection = field(default_factory=WheelSection)
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    design: DesignSection = field(default_factory=DesignSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    ukf: UkfSection = field(default_factory=UkfSection)
    scm: ScmSection = field(default_factory=ScmSection)
    path: str = ""
    text: str = ""

    def terrain_params(self) -> TerrainParams:
        return self._wrap(self.terrain.build, "terrain")

    def geometry(self) -> WheelGeometry:
        return self._wrap(lambda: WheelGeometry(r=self.wheel.r, b=self.wheel.b), "wheel")

    def vehicle_params(self) -> VehicleParams:
        v = self.vehicle
        return self._wrap(lambda: VehicleParams(M_t=v.mass, I_zz=v.yaw_inertia, L_f=v.l_f,
                                                L_r=v.l_r, wheels_per_axle=v.wheels_per_axle),
                          "vehicle")

    def scm_config(self) -> ScmConfig:
        s = self.scm
        return self._wrap(lambda: ScmConfig(spacing=s.spacing, window_length=s.window_length,
                                            window_width=s.window_width, arc_half=s.arc_half),
                          "scm")

    def sweep_spec(self) -> SweepSpec:
        sw = self.sweep
        n = sw.n if sw.n is not None else self.terrain_params().n
        return self._wrap(lambda: SweepSpec(W=sw.W, s=sw.s, v=sw.v, n=n,
                                            beta_amplitude=sw.beta_amplitude,
                                            frequency=sw.frequency, duration=sw.duration,
                                            settle=sw.settle), "sweep")

    def sweep_design(self, desk: Optional[bool] = None) -> SweepDesign:
        d = self.design
        desk = d.scale == "desk" if desk is None else desk
        kw = dict(loads=d.loads, speeds=d.speeds, exponents=d.exponents, ranges=d.ranges,
                  duration=d.duration)
        try:
            return SweepDesign.desk(**kw) if desk else SweepDesign(**kw)
        except ConfigError as e:
            raise ConfigError(str(e), path=self.path) from e

    def validation_design(self) -> ValidationDesign:
        return ValidationDesign(n_points=self.design.validation_points,
                                seed=self.design.validation_seed, duration=self.design.duration)

    def drive_profile(self) -> DriveProfile:
        sc = self.scenario
        return self._wrap(lambda: DriveProfile(
            speed_min=sc.speed_min, speed_max=sc.speed_max, speed_period=sc.speed_period,
            steer_amplitude=sc.steer_amplitude, steer_period=sc.steer_period,
            drive_slip=sc.drive_slip), "scenario")

    def plant_config(self, seed: int = 0, duration: Optional[float] = None) -> PlantConfig:
        sc = self.scenario
        return PlantConfig(kind=sc.plant, duration=duration or sc.duration, seed=seed,
                           n_f=sc.n_f, n_r=sc.n_r)

    def ukf_config(self) -> UkfConfig:
        u = self.ukf
        Q = default_q() * u.q_scale
        Q[6, 6] = Q[7, 7] = u.q_n
        return self._wrap(lambda: UkfConfig(alpha=u.alpha, kappa=u.kappa, zeta=u.zeta, Q=Q,
                                            R=default_r() * u.r_scale, P0=default_p0(u.p0_n)),
                          "ukf")

    def estimator_config(self) -> EstimatorConfig:
        sc = self.scenario
        return EstimatorConfig(n_f0=sc.n_f0, n_r0=sc.n_r0, ax_source=sc.ax_source,
                               ukf=self.ukf_config())

    def _wrap(self, build, section: str):
        try:
            return build()
        except DomainError as e:
            raise ConfigError(f"[{section}] {e}", path=self.path,
                              line=_section_line(self.text, section)) from e


# ── Parsing ───────────────────────────────────────────────────────────────────

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _section_line(text: str, section: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m and m.group(1).strip().lower() == section:
            return i
    return None


def _key_line(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1).strip().lower()
            continue
        k = _KEY_RE.match(line)
        if k and current == section and k.group(1).strip().lower() == key:
            return i
    return None


def _convert(raw: str, annotation: str):
    """Convert a raw string using the field's annotation (as a string, see __future__)."""
    raw = raw.strip()
    if annotation.startswith("Tuple"):
        items = [x for x in re.split(r"[,\s]+", raw) if x]
        cast = int if "int" in annotation else float
        return tuple(cast(x) for x in items)
    if annotation.startswith("Optional"):
        if raw.lower() in ("", "none"):
            return None
        annotation = annotation[len("Optional["):-1]
    if annotation == "int":
        return int(raw)
    if annotation == "float":
        val = float(raw)
        if not math.isfinite(val):
            raise ValueError(f"{raw!r} is not finite")
        return val
    return raw


def _parse_section(cls: type, items: Dict[str, str], text: str, section: str, path: str):
    known = {f.name.lower(): f for f in fields(cls)}
    values = {}
    for key, raw in items.items():
        f = known.get(key)
        if f is None:
            raise ConfigError(f"unknown key {key!r} in [{section}]; valid keys: "
                              f"{', '.join(sorted(known))}", path=path,
                              line=_key_line(text, section, key))
        try:
            values[f.name] = _convert(raw, str(f.type))
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({e})", path=path,
                              line=_key_line(text, section, key)) from e
    return cls(**values)


def parse_config(text: str, path: str = "") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key outside any [section]", path=path, line=e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError("cannot parse line", path=path, line=line) from e
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(e.message, path=path, line=e.lineno) from e

    sections = {}
    for name in parser.sections():
        key = name.strip().lower()
        cls = SECTIONS.get(key)
        if cls is None:
            raise ConfigError(f"unknown section [{name}]; valid sections: "
                              f"{', '.join(SECTIONS)}", path=path, line=_section_line(text, key))
        sections[key] = _parse_section(cls, dict(parser.items(name)), text, key, path)
    cfg = RunConfig(**sections, path=path, text=text)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.design.scale not in DESIGN_SCALES:
        raise ConfigError(f"[design] scale must be one of {DESIGN_SCALES}, got "
                          f"{cfg.design.scale!r}", path=cfg.path,
                          line=_key_line(cfg.text, "design", "scale"))
    if normalize_preset_name(cfg.terrain.preset) not in TERRAIN_PRESETS:
        valid = ", ".join(sorted(TERRAIN_PRESETS))
        raise ConfigError(f"unknown terrain preset {cfg.terrain.preset!r}; valid presets: {valid}",
                          path=cfg.path, line=_key_line(cfg.text, "terrain", "preset"))


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError("config file not found", path=path)
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), path)


def default_config() -> RunConfig:
    return RunConfig()


def config_summary(cfg: RunConfig) -> List[str]:
    """One line per non-default key, for the log."""
    out = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        base = SECTIONS[name]()
        for f in fields(sec):
            val = getattr(sec, f.name)
            if val != getattr(base, f.name):
                out.append(f"[{name}] {f.name} = {val}")
    return out
