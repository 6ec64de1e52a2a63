"""Error hierarchy shared by every stage of the goodness-of-fit pipeline.

Each error carries the process exit code the CLI maps it to and the name of
the stage that raised it, so that failures can be reported as JSON.
"""

from typing import Any, Dict

import numpy as np


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


class GofError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1
    stage = "pipeline"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": _jsonable(self.details),
        }


class ConfigError(GofError):
    exit_code = 2
    stage = "config"

    def __init__(self, message: str, problems=None, **details: Any):
        self.problems = list(problems or [])
        if self.problems:
            details["problems"] = self.problems
        super().__init__(message, **details)


class InvalidGridError(GofError):
    exit_code = 2
    stage = "grid"


class InvalidParameterError(GofError):
    exit_code = 2
    stage = "parameters"


class InvalidMarkError(GofError):
    exit_code = 2
    stage = "marks"


class InvalidConfigurationError(GofError):
    """A point configuration violates simplicity or dimension rules."""

    exit_code = 2
    stage = "configuration"


class InsufficientGuardError(GofError):
    exit_code = 2
    stage = "guard"


class UnsupportedModelError(GofError):
    exit_code = 2
    stage = "model"


class FitError(GofError):
    exit_code = 3
    stage = "fit"


class DegenerateNormalizationError(GofError):
    """Raised instead of emitting a p-value when a covariance estimate is degenerate."""

    exit_code = 4
    stage = "normalization"

    def __init__(self, message: str, spectrum=None, **details: Any):
        self.spectrum = None if spectrum is None else np.atleast_1d(np.asarray(spectrum, dtype=float))
        if self.spectrum is not None:
            details["spectrum"] = self.spectrum
        super().__init__(message, **details)


class QuadratureError(GofError):
    exit_code = 4
    stage = "quadrature"


class CalibrationFailure(GofError):
    exit_code = 4
    stage = "calibration"


class PatternIOError(GofError):
    exit_code = 5
    stage = "io"
