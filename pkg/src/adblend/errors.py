"""Exception hierarchy shared across the package.

Every error raised by adblend derives from AdBlendError so callers can
catch package failures with one clause. ValidationError doubles as a
ValueError; the division-style errors double as ZeroDivisionError.
"""


class AdBlendError(Exception):
    """Base class for all adblend errors."""


class ValidationError(AdBlendError, ValueError):
    """An argument or configuration value violates a precondition."""


class ConfigError(ValidationError):
    """A model or run configuration is incomplete or malformed."""


class UndefinedLiftError(AdBlendError, ZeroDivisionError):
    """Lift requested against a zero baseline metric."""


class ZeroCtrError(AdBlendError, ZeroDivisionError):
    """A payment formula would divide by a zero predicted CTR."""


class NormalizationError(AdBlendError, ZeroDivisionError):
    """A utopia coordinate is zero, so the normalized distance is undefined."""
