"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: ValidationError -> 2,
NumericalError -> 3, StorageError -> 4.
"""


class ConsonetError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ConsonetError, ValueError):
    """Invalid argument, shape, range, or configuration."""


class NumericalError(ConsonetError, ArithmeticError):
    """A numerical procedure failed (divergence, singularity, underflow)."""


class ConvergenceError(NumericalError):
    """Iteration or series truncation did not reach the requested tolerance."""


class SingularMatrixError(NumericalError):
    """Linear system is singular to working precision."""


class StepUnderflowError(NumericalError):
    """Adaptive integrator drove the step size below its configured minimum."""


class StorageError(ConsonetError, IOError):
    """Corrupt, truncated, or version-mismatched on-disk artifact."""
