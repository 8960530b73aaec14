"""Exception types shared across the package."""


class WeakdnsError(Exception):
    """Base class for all package errors."""


class DomainError(WeakdnsError, ValueError):
    """An input violates an operation's documented precondition."""


class ConfigError(WeakdnsError):
    """A run configuration is malformed (unknown keys, bad values)."""


class DataError(WeakdnsError):
    """A dataset, manifest, or checkpoint file is missing or corrupt."""


class SequencingError(WeakdnsError):
    """A training stage was requested before its prerequisites exist."""
