"""Exception types shared across the package."""

from __future__ import annotations


class CoopLocError(Exception):
    """Base class for all cooploc errors."""


class DegenerateGeometryError(CoopLocError):
    """Two robots are (numerically) coincident; the range-bearing model is undefined."""


class NumericalFailureError(CoopLocError):
    """A covariance or linear solve went bad beyond repair.

    Carries the offending matrix and, when known, the simulation step so a
    failed run can be diagnosed from the error alone.
    """

    def __init__(self, message: str, matrix=None, step: int | None = None):
        context = message
        if step is not None:
            context += f" (step {step})"
        super().__init__(context)
        self.matrix = matrix
        self.step = step


class ConfigError(CoopLocError):
    """A scenario configuration is invalid; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ReplayFormatError(CoopLocError):
    """A replay log violates the documented schema; ``row`` is 1-based."""

    def __init__(self, path: str, row: int, message: str):
        super().__init__(f"{path}, row {row}: {message}")
        self.path = path
        self.row = row
