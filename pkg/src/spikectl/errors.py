class ConfigurationError(ValueError):
    """Raised when a configuration or parameter set violates its invariants."""


class TopologyError(ConfigurationError):
    """Raised when a network cannot be constructed from the given topology."""

