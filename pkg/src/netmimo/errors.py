"""Exception types shared across the package."""


class NetMimoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NetMimoError, ValueError):
    """Invalid layout, scheme, or experiment configuration."""


class SymmetryViolationError(ConfigurationError):
    """A user bin descriptor is not symmetric with respect to its cluster."""


class FeasibilityError(ConfigurationError):
    """A scheme violates a hard feasibility constraint (e.g. J*S >= C*M)."""


class DomainError(NetMimoError, ValueError):
    """Operation called outside its mathematical domain."""


class SingularRealizationError(NetMimoError, RuntimeError):
    """A drawn channel matrix was numerically rank deficient."""

    def __init__(self, message, seed_info=None):
        super().__init__(message)
        self.seed_info = seed_info


class NumericalError(NetMimoError, RuntimeError):
    """Numerical failure during evaluation (reported as CLI exit code 2)."""
