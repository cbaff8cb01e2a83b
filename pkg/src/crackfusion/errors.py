"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class ValidationError(ValueError):
    """Input data or arguments violate a documented contract."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, underflow, ...)."""
