"""
errors.py — TerraSense
Exception hierarchy. Config problems map to exit code 2, numerical failures to 3.
"""

from __future__ import annotations
from typing import Any, Optional

from .constants import EXIT_CONFIG, EXIT_NUMERICAL


class TerraSenseError(Exception):
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, *, stage: str = ""):
        super().__init__(message)
        self.stage = stage

    def with_stage(self, stage: str) -> "TerraSenseError":
        self.stage = stage
        return self

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


# ── Configuration ─────────────────────────────────────────────────────────────

class ConfigError(TerraSenseError):
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, *, path: str = "", line: Optional[int] = None, stage: str = ""):
        where = path
        if line is not None:
            where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message, stage=stage)
        self.path = path
        self.line = line


class MissingArtifactError(TerraSenseError):
    exit_code = EXIT_CONFIG


# ── Numerics ──────────────────────────────────────────────────────────────────

class NumericalError(TerraSenseError):
    exit_code = EXIT_NUMERICAL


class DomainError(NumericalError, ValueError):
    """Input outside the domain of a terramechanics relation."""


class ContactGeometryError(DomainError):
    pass


class SinkageError(NumericalError):
    def __init__(self, message: str, *, last_iterate: float = float("nan"), stage: str = ""):
        super().__init__(f"{message} (last iterate h={last_iterate:.6g} m)", stage=stage)
        self.last_iterate = last_iterate


class ScmError(NumericalError):
    pass


class FilterError(NumericalError):
    def __init__(self, message: str, *, diagnostics: Any = None, stage: str = ""):
        super().__init__(message, stage=stage)
        self.diagnostics = diagnostics
        self.partial: Any = None           # estimator trace up to the failing step


class CalibrationError(NumericalError):
    def __init__(self, message: str, *, factor: str = "", stage: str = ""):
        super().__init__(f"{factor}: {message}" if factor else message, stage=stage)
        self.factor = factor
