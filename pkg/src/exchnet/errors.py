"""Exception hierarchy.

Every exception carries an ``exit_code`` so the CLI can map failures to
process exit statuses without a lookup table.
"""

from __future__ import annotations


class ExchnetError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class DataError(ExchnetError):
    """Invalid, incomplete or inconsistent input data."""

    exit_code = 1


class SchemaError(DataError):
    """A referenced variable or column does not exist."""


class InvalidDyadError(DataError):
    """A dyad index is out of range or a self-loop."""


class ParameterSpaceError(DataError):
    """A covariance vector lies outside the admissible parameter space."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class RankDeficientError(DataError):
    """The design matrix does not have full column rank."""

    def __init__(self, message: str, columns: list[int] | None = None):
        super().__init__(message)
        self.columns = list(columns or [])


class EstimationError(ExchnetError):
    """An estimator could not produce a value."""

    exit_code = 2


class ConvergenceError(EstimationError):
    """Iterative fitting did not converge."""


class LinkOverflowError(EstimationError):
    """Linear predictor outside the range where the link is finite."""


class SamplerError(ExchnetError):
    """A random-variate generator cannot sample the requested law."""

    exit_code = 1
