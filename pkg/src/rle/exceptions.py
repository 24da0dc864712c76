"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ResourceLimitError(RuntimeError):
    """A computation would exceed a configured memory or enumeration cap."""
