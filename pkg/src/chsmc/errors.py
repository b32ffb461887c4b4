"""Exception types shared across the package."""


class ChsmcError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ChsmcError):
    """Argument outside the domain of a potential or its subdifferential."""


class ConvergenceError(ChsmcError):
    """An inner scalar solve failed to reach tolerance (indicates a bug)."""


class ParamError(ChsmcError):
    """Scalar parameters violate a precondition (e.g. rho <= M)."""


class VolumeError(ChsmcError):
    """Domain volume too large for the gain-design formulas."""


class MeanError(ChsmcError):
    """Mean-value compatibility condition violated."""


class SolveError(ChsmcError):
    """A linear solve failed to reach its tolerance."""


class NewtonError(ChsmcError):
    """A nonlinear (Newton) solve failed; callers may retry with smaller dt."""


class ModeRangeError(ChsmcError):
    """Requested more spectral modes than the grid supports."""


class RegimeError(ChsmcError):
    """Operation applied to the wrong boundary-condition regime."""


class MissingDataError(ChsmcError):
    """Required optional data (e.g. target derivatives) not supplied."""


class ConfigError(ChsmcError):
    """Invalid or incomplete run configuration."""
