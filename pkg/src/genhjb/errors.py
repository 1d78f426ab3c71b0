"""Exception types shared across the package.

Callers that drive full pipelines (CLI, sweeps) catch these to distinguish
bad inputs from numerical breakdown from I/O trouble.
"""


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, malformed values, bad shapes."""


class ConditioningError(RuntimeError):
    """A regularized kernel system could not be factorized.

    Usually means gamma is too small for the dataset, or duplicate
    sample points collapsed the Gram matrix.
    """


class StepSizeError(RuntimeError):
    """The implicit time-stepping matrix is singular for the requested dt."""


class DivergenceError(RuntimeError):
    """An iteration left the numerical domain (blow-up, NaN, Inf)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NumericalDomainError(RuntimeError):
    """A model evaluation produced a non-finite value at a specific point."""

    def __init__(self, message: str, where=None):
        super().__init__(message)
        self.where = where
