"""Endogenous business cycles from coupled market sentiment and output.

Submodules: ``model`` (parameters and right-hand sides), ``noise`` (news
paths), ``integrator`` (fixed-step simulation), ``micro`` (agent Monte Carlo),
``phase`` (equilibria, separatrices, barriers), ``cycles`` (cycle and growth
statistics), ``calibration`` (price-map fitting) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import BoundViolationError, ConfigError, DivergenceError
from .model import BoundedState, FullState, MicroParams, Params

__all__ = ["BoundViolationError", "BoundedState", "ConfigError", "DivergenceError",
           "FullState", "MicroParams", "Params", "__version__"]
