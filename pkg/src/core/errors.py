"""
Exception hierarchy for the simulator.

Every error raised on purpose derives from ReadoutSimError so callers (the CLI
in particular) can tell model failures apart from programming errors.
"""

from typing import Any, Dict, List, Optional


class ReadoutSimError(Exception):
    """Base class for simulator errors."""


class ParameterError(ReadoutSimError, ValueError):
    """A parameter lies outside its physical or numerical domain."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class TruncationError(ReadoutSimError):
    """A truncated basis is too small for the requested accuracy."""


class ResourceError(ReadoutSimError):
    """A composed operator would exceed the configured dimension cap."""


class LabelingError(ReadoutSimError):
    """Dressed states could not be matched to bare labels unambiguously."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BasisError(ReadoutSimError):
    """The quasi-eigenbasis does not capture the initial state."""

    def __init__(self, message: str, overlap_report: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.overlap_report = overlap_report or {}


class IntegrationError(ReadoutSimError):
    """Time evolution left the space of density matrices (trace or positivity)."""

    def __init__(self, message: str, time: float = 0.0):
        super().__init__(message)
        self.time = time


class CalibrationError(ReadoutSimError):
    """Photon-number calibration failed (bistability, rank-deficient data)."""


class StatsError(ReadoutSimError):
    """Measurement statistics could not be computed."""


class ConfigError(ReadoutSimError):
    """Invalid configuration; carries one message per offending field."""

    def __init__(self, problems: List[str]):
        super().__init__("; ".join(problems) if problems else "invalid configuration")
        self.problems = list(problems)
