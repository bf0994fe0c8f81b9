"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Raised when a configuration value is inconsistent or out of range."""


class DomainError(ValueError):
    """Raised when an operation receives inputs outside its domain."""
