"""Exception types shared across the package."""


class ReshadowError(Exception):
    """Base class for package errors."""


class DimensionCapError(ReshadowError):
    """Requested system size exceeds the dense-simulation cap."""


class NumericalDegeneracyError(ReshadowError):
    """A quantity that must be a probability distribution failed its sanity check."""


class NotVisibleError(ReshadowError):
    """Operator has a component outside the visible space of the ensemble."""


class RepresentabilityError(ReshadowError):
    """A discrete unitary set cannot represent the requested operator.

    Carries the best least-squares residual achieved.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(ReshadowError):
    """Iterative routine failed to converge; best iterate attached when available."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(ReshadowError):
    """Bad or unknown configuration input."""
