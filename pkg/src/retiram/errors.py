"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A shape, architecture, or settings problem detected before/while building."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf or otherwise left the finite domain."""


class UsageError(RuntimeError):
    """An API was called in an unsupported order or with an unsupported request."""
