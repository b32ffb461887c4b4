"""Viscous Cahn-Hilliard simulator with sliding-mode control.

Subpackages: :mod:`chsmc.potentials` (convex/Lipschitz splittings and
Yosida regularization), :mod:`chsmc.smc` (sign nonlinearity, comparison
ODE, gain design), :mod:`chsmc.grid` (finite-difference machinery),
:mod:`chsmc.solver` (time steppers), :mod:`chsmc.analysis` (verification
harness), :mod:`chsmc.cli` (batch front end).
"""

from . import analysis, cli, grid, potentials, smc, solver
from .errors import (ChsmcError, ConfigError, ConvergenceError, DomainError,
                     MeanError, MissingDataError, ModeRangeError,
                     NewtonError, ParamError, RegimeError, SolveError,
                     VolumeError)

__all__ = [
    "analysis", "cli", "grid", "potentials", "smc", "solver",
    "ChsmcError", "ConfigError", "ConvergenceError", "DomainError",
    "MeanError", "MissingDataError", "ModeRangeError", "NewtonError",
    "ParamError", "RegimeError", "SolveError", "VolumeError",
]

__version__ = "0.1.0"
