"""Exception hierarchy shared by the library and the CLI.

Each error carries the process exit code the CLI uses for it:

    0 ok, 2 input error, 3 structure error, 4 method precondition error,
    5 numerical failure.
"""

from __future__ import annotations


class NngpImputeError(Exception):
    """Base class for every error raised by nngp_impute."""
    exit_code: int = 1


class InputDataError(NngpImputeError, ValueError):
    """Unreadable, ragged or mismatched input data."""
    exit_code = 2


class KernelDimensionError(InputDataError):
    """Kernel inputs of unequal or invalid length."""


class PatternValidationError(NngpImputeError, ValueError):
    """Rows do not follow the claimed K-pattern structure."""
    exit_code = 3


class UnsupportedInputError(NngpImputeError, ValueError):
    """The chosen method cannot run on this dataset (e.g. no complete cases)."""
    exit_code = 4


class NumericalError(NngpImputeError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""
    exit_code = 5


class KernelDomainError(NumericalError):
    """Kernel recursion received values outside its domain."""


class SingularKernelError(NumericalError):
    """Cholesky factorization failed even at the largest jitter."""

    def __init__(self, message: str, pattern: int | None = None, condition: float | None = None):
        super().__init__(message)
        self.pattern = pattern
        self.condition = condition


class SamplingError(NumericalError):
    """A covariance matrix could not be factorized for sampling."""


class SingularDesignError(NumericalError):
    """Regression design matrix is rank deficient."""
