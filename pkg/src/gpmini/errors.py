"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2,
NumericalError (and subclasses) -> 3, I/O failures -> 4.
"""


class GpMiniError(Exception):
    """Base class for all gpmini errors."""


class ValidationError(GpMiniError, ValueError):
    """Bad user input: out-of-range parameters, malformed files, shape mismatches."""


class NumericalError(GpMiniError, ArithmeticError):
    """Numerical failure: non-PD matrices, degenerate conditional variances."""


class EstimationError(NumericalError):
    """A fitted approximation failed its certification threshold."""
