"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Shapes, bases or indices do not fit together."""


class DomainError(ValueError):
    """Input lies outside the region where an operation is defined."""


class ConfigError(ValueError):
    """A configuration or hyperparameter violates its constraints."""


class RefusalError(RuntimeError):
    """An exact enumeration was requested on an instance too large to enumerate."""
