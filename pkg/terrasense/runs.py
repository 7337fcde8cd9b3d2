# TerraSense — Run Directories & Artifacts
# Per-run output folders with a JSON manifest, a copy of the config that
# produced them, and versioned CSV files.

from __future__ import annotations
import csv
import hashlib
import json
import logging
import math
import os
import re
import shutil
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .constants import CSV_SCHEMAS, LOGGER_NAME
from .errors import ConfigError, MissingArtifactError

log = logging.getLogger(LOGGER_NAME)

MANIFEST_NAME = "manifest.json"
CONFIG_COPY_NAME = "config.ini"
DEFAULT_RUNS_BASE = "runs"             # relative to the working directory
_INFO_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tool_info.json")


def tool_version() -> str:
    try:
        with open(_INFO_PATH, encoding="utf-8") as f:
            return str(json.load(f).get("version", "0"))
    except (OSError, json.JSONDecodeError):
        return "0"


# ── Manifest ──────────────────────────────────────────────────────────────────

@dataclass
class RunManifest:
    command: str                           # sweep | calibrate | estimate | report
    config_path: str = ""
    seed: int = 0
    out_dir: str = ""
    tool_version: str = field(default_factory=tool_version)
    artifacts: Dict[str, str] = field(default_factory=dict)     # file -> schema or kind
    coefficients: Dict[str, str] = field(default_factory=dict)  # path, sha256
    terrain: str = ""
    status: str = "running"                # running | ok | failed
    error: str = ""
    saved_at: float = field(default_factory=time.time)

    def add_artifact(self, name: str, kind: str) -> None:
        self.artifacts[name] = kind


# ── Run directory management ──────────────────────────────────────────────────

def slugify(label: str, max_len: int = 40) -> str:
    """Turn a run label into a filesystem-safe slug."""
    slug = label.lower().strip()
    slug = re.sub(r"[^a-z0-9\s_-]", "", slug)
    slug = re.sub(r"[\s_]+", "-", slug)
    slug = re.sub(r"-+", "-", slug).strip("-")
    slug = slug[:max_len].rstrip("-")
    return slug or "run"


def create_run_dir(label: str, base_dir: str = "") -> str:
    """Create <base_dir>/<slug>, adding -2, -3, ... when the folder exists."""
    base_dir = base_dir or DEFAULT_RUNS_BASE
    run_dir = os.path.join(base_dir, slugify(label))
    if os.path.exists(run_dir):
        i = 2
        while os.path.exists(f"{run_dir}-{i}"):
            i += 1
        run_dir = f"{run_dir}-{i}"
    os.makedirs(run_dir)
    log.info("Created run dir: %s", run_dir)
    return run_dir


def atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            try:
                os.remove(tmp)
            except OSError:
                pass
        raise


def save_manifest(manifest: RunManifest, run_dir: str = "") -> str:
    run_dir = run_dir or manifest.out_dir
    manifest.saved_at = time.time()
    path = os.path.join(run_dir, MANIFEST_NAME)
    atomic_write_text(path, json.dumps(asdict(manifest), indent=2, default=str) + "\n")
    return path


def load_manifest(run_dir: str) -> RunManifest:
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise MissingArtifactError(f"{run_dir} has no {MANIFEST_NAME}; not a run directory")
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        data["out_dir"] = run_dir
        return RunManifest(**data)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid manifest: {e.msg}", path=path, line=e.lineno) from e
    except TypeError as e:
        raise ConfigError(f"manifest fields do not match: {e}", path=path) from e


def copy_config(config_path: str, run_dir: str, text: str = "") -> str:
    """Copy the config that produced the run; writes the given text when there is no file."""
    dest = os.path.join(run_dir, CONFIG_COPY_NAME)
    if config_path and os.path.exists(config_path):
        shutil.copyfile(config_path, dest)
    else:
        atomic_write_text(dest, text or "# defaults only\n")
    return dest


def _age_str(seconds: float) -> str:
    if seconds < 3600:
        return f"{int(seconds / 60)}m ago"
    if seconds < 86400:
        return f"{int(seconds / 3600)}h ago"
    return f"{int(seconds / 86400)}d ago"


def list_recent_runs(base_dir: str = "", max_results: int = 10) -> List[Dict[str, Any]]:
    """Run folders under base_dir, newest first: {name, path, command, status, age_str, saved_at}."""
    base_dir = base_dir or DEFAULT_RUNS_BASE
    if not os.path.isdir(base_dir):
        return []
    runs = []
    for name in os.listdir(base_dir):
        rdir = os.path.join(base_dir, name)
        mpath = os.path.join(rdir, MANIFEST_NAME)
        if not (os.path.isdir(rdir) and os.path.exists(mpath)):
            continue
        try:
            with open(mpath, encoding="utf-8") as f:
                data = json.load(f)
            saved_at = float(data.get("saved_at", 0))
            runs.append({
                "name": name,
                "path": rdir,
                "command": data.get("command", "?"),
                "terrain": data.get("terrain", ""),
                "status": data.get("status", "?"),
                "age_str": _age_str(time.time() - saved_at),
                "saved_at": saved_at,
            })
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
            log.warning("Skipping run %s: %s", name, e)
    runs.sort(key=lambda r: r["saved_at"], reverse=True)
    return runs[:max_results]


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ── Versioned CSV ─────────────────────────────────────────────────────────────

def schema_header(schema: str) -> str:
    version, _cols = CSV_SCHEMAS[schema]
    return f"# schema: {schema} v{version}"


def _fmt(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path: str, schema: str, rows) -> str:
    """Write rows under a `# schema: <name> v<N>` line and the schema's column header."""
    if schema not in CSV_SCHEMAS:
        raise KeyError(f"unknown CSV schema {schema!r}")
    _version, cols = CSV_SCHEMAS[schema]
    rows = rows.tolist() if isinstance(rows, np.ndarray) else list(rows)
    for i, row in enumerate(rows):
        if len(row) != len(cols):
            raise ValueError(f"{schema} row {i} has {len(row)} values for {len(cols)} columns")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            f.write(schema_header(schema) + "\n")
            w = csv.writer(f, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


@dataclass
class CsvTable:
    schema: str
    version: int
    columns: Tuple[str, ...]
    rows: List[List[str]]

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([float(r[i]) for r in self.rows])

    def numeric(self) -> np.ndarray:
        return np.array([[float(v) for v in r] for r in self.rows]).reshape(-1, len(self.columns))


_SCHEMA_RE = re.compile(r"^# schema: (\w+) v(\d+)$")


def read_csv(path: str, expect: Optional[str] = None) -> CsvTable:
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing input file {path}")
    with open(path, encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\n")
        m = _SCHEMA_RE.match(first)
        if not m:
            raise ConfigError("missing schema header", path=path, line=1)
        reader = csv.reader(f)
        columns = tuple(next(reader, ()))
        rows = [r for r in reader if r]
    schema, version = m.group(1), int(m.group(2))
    if expect is not None and schema != expect:
        raise ConfigError(f"expected schema {expect!r}, found {schema!r}", path=path, line=1)
    known = CSV_SCHEMAS.get(schema)
    if known is not None and version > known[0]:
        raise ConfigError(f"schema {schema} v{version} is newer than supported v{known[0]}",
                          path=path, line=1)
    return CsvTable(schema=schema, version=version, columns=columns, rows=rows)


def write_json(path: str, data: Any) -> str:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return path


def runs_base_for(out: str) -> str:
    return out or DEFAULT_RUNS_BASE


def coefficients_dir(out: str) -> str:
    """Where calibrate publishes coefficient files and estimate searches for them."""
    return os.path.join(runs_base_for(out), "coefficients")

