"""
coeffs.py — TerraSense
Correction-function coefficient tables (g1, g2, g3 per slip range and
hysteresis branch) and their JSON file format.

Each g is a product of one-input factor functions. A factor carries its
functional form and its coefficients, highest degree first:

    polynomial      c0 x^d + ... + cd
    affine          a x + b
    power           a x^p
    clamped_affine  max(a x + b, 0)

times an optional scale. Files are written atomically and floats round-trip
bit-exactly through json's repr formatting.
"""

from __future__ import annotations
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .constants import BRANCHES, LOGGER_NAME, SLIP_RANGES
from .errors import ConfigError, MissingArtifactError

log = logging.getLogger(LOGGER_NAME)

FILE_FORMAT = "gfun-coeffs"
FILE_VERSION = 1

FORMS = ("polynomial", "affine", "power", "clamped_affine")
INPUTS = ("n", "s", "Fz", "v")

# Default factor layout: name -> (g, input, form, polynomial degree)
FACTOR_SPECS: Dict[str, Tuple[str, str, str, int]] = {
    "g1_n":  ("g1", "n",  "polynomial",     5),
    "g1_s":  ("g1", "s",  "polynomial",     4),
    "g2_n":  ("g2", "n",  "clamped_affine", 1),
    "g2_s":  ("g2", "s",  "polynomial",     4),
    "g2_Fz": ("g2", "Fz", "affine",         1),
    "g2_v":  ("g2", "v",  "power",          1),
    "g3_n":  ("g3", "n",  "polynomial",     2),
    "g3_s":  ("g3", "s",  "polynomial",     4),
    "g3_Fz": ("g3", "Fz", "affine",         1),
}
REQUIRED_FACTORS = ("g1_s", "g2_n", "g2_s", "g2_Fz", "g2_v", "g3_n", "g3_s", "g3_Fz")
G_NAMES = ("g1", "g2", "g3")


# ── Factor functions ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FactorFunction:
    name: str                              # e.g. "g2_s"
    input: str                             # n | s | Fz | v
    form: str                              # see FORMS
    coeffs: Tuple[float, ...]              # highest degree first
    scale: float = 1.0

    def __post_init__(self):
        if self.input not in INPUTS:
            raise ConfigError(f"factor {self.name}: unknown input {self.input!r}")
        if self.form not in FORMS:
            raise ConfigError(f"factor {self.name}: unknown form {self.form!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.form == "polynomial" and len(self.coeffs) < 1:
            raise ConfigError(f"factor {self.name}: polynomial needs at least one coefficient")
        if self.form != "polynomial" and len(self.coeffs) != 2:
            raise ConfigError(f"factor {self.name}: form {self.form} takes 2 coefficients, "
                              f"got {len(self.coeffs)}")
        if not all(np.isfinite(self.coeffs)) or not np.isfinite(self.scale):
            raise ConfigError(f"factor {self.name}: non-finite coefficient")

    @property
    def group(self) -> str:
        return self.name.split("_", 1)[0]

    @property
    def n_params(self) -> int:
        return len(self.coeffs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coeffs
        if self.form == "polynomial":
            val = np.polyval(c, x)
        elif self.form == "affine":
            val = c[0] * x + c[1]
        elif self.form == "power":
            val = c[0] * np.power(x, c[1])
        else:
            val = np.maximum(c[0] * x + c[1], 0.0)
        return self.scale * val

    def expanded(self) -> "FactorFunction":
        """Same function with the scale folded into the coefficients where the form allows."""
        if self.scale == 1.0:
            return self
        if self.form in ("polynomial", "affine"):
            return replace(self, coeffs=tuple(self.scale * c for c in self.coeffs), scale=1.0)
        if self.form == "power":
            return replace(self, coeffs=(self.scale * self.coeffs[0], self.coeffs[1]), scale=1.0)
        if self.scale > 0:
            return replace(self, coeffs=tuple(self.scale * c for c in self.coeffs), scale=1.0)
        return self

    def to_record(self) -> dict:
        return {"name": self.name, "input": self.input, "form": self.form,
                "coeffs": list(self.coeffs), "scale": self.scale}

    @classmethod
    def from_record(cls, rec: dict) -> "FactorFunction":
        return cls(name=str(rec["name"]), input=str(rec["input"]), form=str(rec["form"]),
                   coeffs=tuple(rec["coeffs"]), scale=float(rec.get("scale", 1.0)))

    @classmethod
    def constant(cls, name: str, value: float) -> "FactorFunction":
        return cls(name=name, input=FACTOR_SPECS[name][1], form="polynomial", coeffs=(value,))


# ── Coefficient sets ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GFunSet:
    slip_range: int
    branch: str                            # lower | upper
    factors: Dict[str, FactorFunction]

    def __post_init__(self):
        if self.slip_range not in SLIP_RANGES:
            raise ConfigError(f"unknown slip range {self.slip_range}")
        if self.branch not in BRANCHES:
            raise ConfigError(f"unknown hysteresis branch {self.branch!r}")
        missing = [f for f in REQUIRED_FACTORS if f not in self.factors]
        if missing:
            raise ConfigError(f"coefficient set (range {self.slip_range}, {self.branch}) "
                              f"is missing factors: {', '.join(missing)}")

    @property
    def bounds(self) -> Tuple[float, float]:
        lo, hi, _, _ = SLIP_RANGES[self.slip_range]
        return lo, hi

    def group(self, g: str) -> List[FactorFunction]:
        return [f for name, f in self.factors.items() if f.group == g]

    def evaluate(self, g: str, inputs: Dict[str, np.ndarray]):
        """Product of the factors of g at the given inputs (n, s, Fz, v)."""
        val = 1.0
        for f in self.group(g):
            val = val * f(inputs[f.input])
        return val


@dataclass
class GFunCoeffs:
    terrain: str
    sets: Dict[Tuple[int, str], GFunSet] = field(default_factory=dict)
    calibrated: bool = False
    source: str = ""
    meta: Dict[str, object] = field(default_factory=dict)

    def get(self, slip_range: int, branch: str) -> GFunSet:
        try:
            return self.sets[(slip_range, branch)]
        except KeyError:
            raise MissingArtifactError(
                f"no correction coefficients for terrain {self.terrain!r}, slip range "
                f"{slip_range}, {branch} curve") from None

    def ranges(self) -> List[int]:
        return sorted({r for r, _ in self.sets})

    def is_complete(self) -> bool:
        return all((r, b) in self.sets for r in SLIP_RANGES for b in BRANCHES)

    def with_set(self, gset: GFunSet) -> "GFunCoeffs":
        """Copy with one set replaced; tables are never mutated in place."""
        sets = dict(self.sets)
        sets[(gset.slip_range, gset.branch)] = gset
        return replace(self, sets=sets)

    @classmethod
    def identity(cls, terrain: str, k_y: float, g2: float = 0.0,
                 ranges: Iterable[int] = tuple(SLIP_RANGES)) -> "GFunCoeffs":
        """g1 = 1, g2 = const, g3 = k_y everywhere; reproduces the base lateral stress."""
        values = {"g1_s": 1.0, "g2_n": g2, "g2_s": 1.0, "g2_Fz": 1.0, "g2_v": 1.0,
                  "g3_n": k_y, "g3_s": 1.0, "g3_Fz": 1.0}
        sets = {}
        for r in ranges:
            for b in BRANCHES:
                factors = {name: FactorFunction.constant(name, v) for name, v in values.items()}
                sets[(r, b)] = GFunSet(slip_range=r, branch=b, factors=factors)
        return cls(terrain=terrain, sets=sets, calibrated=False, source="identity")


# ── File format ───────────────────────────────────────────────────────────────

def coeffs_to_dict(coeffs: GFunCoeffs) -> dict:
    sets = []
    for (r, b) in sorted(coeffs.sets, key=lambda k: (k[0], BRANCHES.index(k[1]))):
        gset = coeffs.sets[(r, b)]
        sets.append({
            "slip_range": r,
            "bounds": list(gset.bounds),
            "curve": b,
            "factors": [f.to_record() for f in gset.factors.values()],
        })
    return {
        "format": FILE_FORMAT,
        "version": FILE_VERSION,
        "header": {
            "terrain": coeffs.terrain,
            "calibrated": coeffs.calibrated,
            "source": coeffs.source,
            "meta": coeffs.meta,
        },
        "sets": sets,
    }


def coeffs_from_dict(data: dict, path: str = "") -> GFunCoeffs:
    if data.get("format") != FILE_FORMAT:
        raise ConfigError(f"not a {FILE_FORMAT} file", path=path)
    if int(data.get("version", 0)) > FILE_VERSION:
        raise ConfigError(f"coefficient file version {data.get('version')} is newer than "
                          f"supported version {FILE_VERSION}", path=path)
    try:
        header = data["header"]
        sets = {}
        for rec in data["sets"]:
            factors = {}
            for f in rec["factors"]:
                ff = FactorFunction.from_record(f)
                factors[ff.name] = ff
            gset = GFunSet(slip_range=int(rec["slip_range"]), branch=str(rec["curve"]),
                           factors=factors)
            sets[(gset.slip_range, gset.branch)] = gset
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed coefficient file: {e}", path=path) from e
    return GFunCoeffs(terrain=str(header["terrain"]), sets=sets,
                      calibrated=bool(header.get("calibrated", False)),
                      source=str(header.get("source", "")), meta=dict(header.get("meta", {})))


def save_coeffs(coeffs: GFunCoeffs, path: str) -> str:
    """Write the coefficient file atomically (.tmp then os.replace)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(coeffs_to_dict(coeffs), f, indent=2)
            f.write("\n")
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            try:
                os.remove(tmp)
            except OSError:
                pass
        raise
    log.info("Saved coefficients for %s to %s", coeffs.terrain, path)
    return path


def load_coeffs(path: str) -> GFunCoeffs:
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"coefficient file {path} not found; run `python -m terrasense calibrate` to create it")
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", path=path, line=e.lineno) from e
    return coeffs_from_dict(data, path)
