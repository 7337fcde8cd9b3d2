"""
presets.py — TerraSense
Built-in terrain presets and discovery of coefficient files on disk.
"""

from __future__ import annotations
import json
import logging
import os
from typing import Dict, List, Optional

from .constants import LOGGER_NAME
from .errors import ConfigError, MissingArtifactError
from .terrain import TerrainParams

log = logging.getLogger(LOGGER_NAME)

_PACKAGE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(_PACKAGE_DIR, "data")
SCENARIO_DIR = os.path.join(_PACKAGE_DIR, "scenarios")

# ── Terrain presets ───────────────────────────────────────────────────────────

TERRAIN_PRESETS: Dict[str, Dict[str, float]] = {
    # Dry sand used for the single-wheel benchmark
    "sand": {
        "k_c": 1000.0, "k_phi": 1528600.0, "n": 1.08,
        "k": 0.024, "c": 200.0, "phi": 0.4712,
    },
    "sandy_loam": {
        "k_c": 5300.0, "k_phi": 1515000.0, "n": 0.7,
        "k": 0.025, "c": 1700.0, "phi": 0.5061,
    },
    "clay": {
        "k_c": 13200.0, "k_phi": 692200.0, "n": 0.5,
        "k": 0.01, "c": 4140.0, "phi": 0.2269,
    },
}

# Loose spellings accepted on the command line and in configs
PRESET_ALIASES: Dict[str, str] = {
    "sandy-loam": "sandy_loam",
    "sandyloam": "sandy_loam",
    "loam": "sandy_loam",
}


def normalize_preset_name(name: str) -> str:
    key = name.strip().lower().replace(" ", "_")
    return PRESET_ALIASES.get(key, key)


def get_terrain_preset(name: str, **overrides) -> TerrainParams:
    """Build TerrainParams from a named preset, applying any field overrides."""
    key = normalize_preset_name(name)
    if key not in TERRAIN_PRESETS:
        valid = ", ".join(sorted(TERRAIN_PRESETS))
        raise ConfigError(f"unknown terrain preset {name!r}; valid presets: {valid}")
    fields = dict(TERRAIN_PRESETS[key])
    fields.update({k: v for k, v in overrides.items() if v is not None})
    fields.setdefault("name", key)
    return TerrainParams(**fields)


# ── Coefficient files ─────────────────────────────────────────────────────────

def _scan_folder(folder: str, source: str) -> List[dict]:
    if not os.path.isdir(folder):
        return []
    found = []
    for fname in sorted(os.listdir(folder)):
        if not fname.endswith(".json"):
            continue
        fpath = os.path.join(folder, fname)
        try:
            with open(fpath, encoding="utf-8") as f:
                data = json.load(f)
            header = data.get("header", {})
            terrain = header.get("terrain", "")
            if data.get("format") != "gfun-coeffs" or not terrain:
                continue
            found.append({
                "terrain": normalize_preset_name(terrain),
                "path": fpath,
                "source": source,
                "calibrated": bool(header.get("calibrated", False)),
                "ranges": sorted({int(s["slip_range"]) for s in data.get("sets", [])}),
            })
        except (json.JSONDecodeError, OSError, KeyError, TypeError, ValueError) as e:
            log.warning("Skipping coefficient file %s: %s", fname, e)
            continue
    return found


def scan_coefficient_files(search_dirs: Optional[List[str]] = None) -> List[dict]:
    dirs = list(search_dirs or []) + [DATA_DIR]
    entries: List[dict] = []
    for d in dirs:
        entries += _scan_folder(d, "bundled" if d == DATA_DIR else "user")
    return entries


def find_coefficients(terrain: str, search_dirs: Optional[List[str]] = None,
                      require_all_ranges: bool = True) -> str:
    """Return the path of the first calibrated coefficient file for a terrain."""
    key = normalize_preset_name(terrain)
    for entry in scan_coefficient_files(search_dirs):
        if entry["terrain"] != key or not entry["calibrated"]:
            continue
        if require_all_ranges and entry["ranges"] != [1, 2, 3, 4]:
            continue
        return entry["path"]
    raise MissingArtifactError(
        f"no calibrated coefficient file for terrain {key!r}; "
        f"run `python -m terrasense calibrate --config <design.ini>` first")
