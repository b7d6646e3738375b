"""Efficient estimation for symmetric stable Levy processes observed at high frequency."""

from .errors import DomainError, EstimationError, NumericalError, ParseError
from .likelihood import IncrementSeries, SamplingScheme, Theta

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "EstimationError",
    "NumericalError",
    "ParseError",
    "IncrementSeries",
    "SamplingScheme",
    "Theta",
]
