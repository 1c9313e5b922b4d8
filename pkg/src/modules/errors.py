"""
Exception types raised by semtrack.

Every error derives from SemTrackError and from the closest builtin, so callers
can catch either the project type or the generic one.
"""


class SemTrackError(Exception):
    """Base class for all semtrack errors."""


class ConfigError(SemTrackError, ValueError):
    """A configuration value is missing, malformed or out of range."""


class DimensionMismatch(SemTrackError, ValueError):
    """Array shapes disagree with the declared (N, C) layout."""


class NonFiniteValue(SemTrackError, ArithmeticError):
    """A tracker update produced NaN or Inf, usually a step size that is too large."""


class SingularSystem(SemTrackError, ArithmeticError):
    """I - A is numerically singular; the generator should never produce this."""


class NoConsistentPattern(SemTrackError, RuntimeError):
    """The sign-enumeration oracle found no pattern satisfying the KKT conditions."""


class AssumptionViolated(SemTrackError, RuntimeError):
    """The premises of the regret bound (beta > 0, alpha <= 1/L_f, gamma < 1) do not hold."""


class DegenerateData(SemTrackError, ValueError):
    """The data stream carries no information (for example all-zero inputs)."""


class ArtifactError(SemTrackError, OSError):
    """An artifact file could not be read or does not follow its schema."""
