"""Exception types shared across the package."""


class EsikitError(Exception):
    """Base class for errors raised by esikit."""


class OutOfDomainError(EsikitError, ValueError):
    """A queried location lies outside the partition's domain."""


class UnsupportedCombination(EsikitError, ValueError):
    """A configuration combines features that do not work together."""


class SchemaError(EsikitError, ValueError):
    """A run configuration document failed validation."""
