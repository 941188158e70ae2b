"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain where an operation is defined."""


class ConfigError(ValueError):
    """A configuration is malformed or violates a parameter constraint."""


class AdmissibilityError(RuntimeError):
    """A policy produced a decision that breaks the allocation constraints."""
