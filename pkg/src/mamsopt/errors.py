"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An input (design, settings, config file) violates a documented constraint."""


class ResourceError(RuntimeError):
    """A request exceeds the configured capacity (bank size, memory budget)."""
