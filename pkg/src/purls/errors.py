"""Exception types shared across the package."""


class PurlsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PurlsError):
    """Operands with incompatible shapes."""


class NonFiniteError(PurlsError):
    """An operation produced (or received) NaN/Inf values."""


class BundleError(PurlsError):
    """A bundle directory, tensor file or manifest failed validation."""


class ValidationError(PurlsError):
    """Inconsistent configuration, split or model/bundle pairing."""
