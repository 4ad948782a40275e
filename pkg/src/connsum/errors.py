"""Exception and warning types shared across the toolkit."""


class ConnsumError(Exception):
    """Base class for all toolkit errors."""


class DomainMismatchError(ConnsumError, ValueError):
    """Two fields (or a field and an operator) live on different domains."""


class NonPositiveFactorError(ConnsumError, ValueError):
    """A conformal factor that must be positive is not."""


class InvalidParameterError(ConnsumError, ValueError):
    """A build parameter is outside its admissible range."""


class QuadratureError(ConnsumError, RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance.

    Carries the achieved error estimate in `estimate`.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ResolutionError(ConnsumError, ValueError):
    """Mesh resolution too coarse for the requested geometry."""


class ConvergenceError(ConnsumError, RuntimeError):
    """An iterative method exceeded its budget or diverged.

    `trace` holds whatever per-iteration diagnostics were collected
    before the failure, `diagnosis` a short machine-readable cause tag.
    """

    def __init__(self, message, trace=None, diagnosis=None):
        super().__init__(message)
        self.trace = trace
        self.diagnosis = diagnosis


class SingularOperatorError(ConnsumError, RuntimeError):
    """A shifted operator has an eigenvalue within tolerance of the shift."""


class SpectralCoverageError(ConnsumError, ValueError):
    """A spectrum report does not cover the interval being queried."""


class ProjectionGateError(ConnsumError, RuntimeError):
    """The mean/neck-mode component of the forcing is too large for the
    projected zero-curvature solve; carries the measured diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ConnsumError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class VolumeMismatchWarning(UserWarning):
    """Joining two zero-curvature bodies whose volumes differ: the build
    proceeds, but the balanced-volume estimates will not hold."""

    def __init__(self, message, vol_prime=None, vol_doubleprime=None):
        super().__init__(message)
        self.vol_prime = vol_prime
        self.vol_doubleprime = vol_doubleprime
