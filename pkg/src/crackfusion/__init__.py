"""Crack-growth prognosis fusing Paris-law physics with ultrasonic damage features."""

from .errors import NumericalError, ValidationError

__version__ = "0.1.0"
__all__ = ["NumericalError", "ValidationError", "__version__"]
