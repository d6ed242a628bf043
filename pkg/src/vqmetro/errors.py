"""Exception hierarchy for the metrology toolbox."""


class MetrologyError(Exception):
    """Base class for all toolbox-specific errors."""


class InternalConsistencyError(MetrologyError):
    """A numerical self-check failed (non-real trace, broken completeness, ...)."""


class UnsupportedGateError(MetrologyError):
    """A derivative was requested for a gate without a two-point shift rule."""


class DegenerateGeometryError(MetrologyError):
    """The sensor geometry does not determine the target position."""


class ConfigError(MetrologyError):
    """A run configuration failed validation."""
