"""Forecast a daily vaccination-to-expectation ratio from clinical counts
and web-search attitude signals, then blend the two prediction streams."""

from .errors import DomainError, EstimationError, ParseError, RankError, VaxcastError
from .series_core import DatedSeries, PopulationParams

__version__ = "0.1.0"

__all__ = [
    "DatedSeries",
    "DomainError",
    "EstimationError",
    "ParseError",
    "PopulationParams",
    "RankError",
    "VaxcastError",
]
