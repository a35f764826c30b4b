"""
Exception hierarchy shared by all toolkit modules.
"""
from typing import Any, Optional


class RFIError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(RFIError, ValueError):
    """Raised when points, operators or measures live in different dimensions."""


class NonFiniteInputError(RFIError, ValueError):
    """Raised when a point contains NaN or Inf entries."""


class DegenerateDrawError(RFIError):
    """Raised when a random draw produces an operator that cannot be built (e.g. a zero normal)."""


class ResampleExhaustedError(RFIError):
    """Raised when every resample attempt for a degenerate draw failed."""


class BudgetExceededError(RFIError):
    """Raised when an exact solver is asked to handle more atoms than its budget."""


class InsufficientDataError(RFIError):
    """Raised when a diagnostic does not have enough history to work with."""


class OrbitEscapeError(RFIError):
    """Raised when a relaxed orbit leaves the declared bounded region."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class ConfigError(RFIError, ValueError):
    """Raised for invalid experiment configurations."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path:
            location = f"{path}:{line}: " if line else f"{path}: "
        elif line:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")
