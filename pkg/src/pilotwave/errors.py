"""Exception types shared across the package."""


class PilotwaveError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(PilotwaveError, ValueError):
    """Invalid domain, parameter, or scenario configuration."""


class DomainTruncationError(ConfigurationError):
    """Analytic state carries non-negligible probability mass outside the grid."""


class ScenarioError(PilotwaveError, RuntimeError):
    """A scenario failed at runtime (not a configuration problem)."""


class SchemeFailureError(ScenarioError):
    """A grid solver produced values outside its validity guarantees."""


class SingularProbabilityError(ScenarioError):
    """Jump rates requested where the occupation probability vanishes."""
