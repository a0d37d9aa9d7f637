"""Simulation and analysis toolkit for pulsed and cw photon-pair sources.

Modules: ``spectral`` (filters and overlap factors), ``shg`` (pump
conversion), ``source`` and ``detector`` (Monte Carlo), ``tagproc`` and
``tagio`` (time tags), ``estimators``, ``jsa`` (Schmidt analysis),
``config``/``pipeline``/``cli`` (end-to-end runs).
"""
from .errors import (ConfigError, DegenerateFitError, DomainError, FitError,
                     InsufficientDataError, NegativeRateError, PairforgeError, StreamOrderError)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateFitError", "DomainError", "FitError", "InsufficientDataError",
    "NegativeRateError", "PairforgeError", "StreamOrderError", "__version__",
]
