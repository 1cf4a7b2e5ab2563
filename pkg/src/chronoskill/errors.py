"""Exception types shared across the package."""


class ChronoskillError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ChronoskillError, ValueError):
    """Shapes do not conform."""


class ArgumentError(ChronoskillError, ValueError):
    """An argument lies outside its documented domain."""


class UsageError(ChronoskillError, RuntimeError):
    """An object was used in a state that does not allow the call."""


class NumericError(ChronoskillError, ArithmeticError):
    """A computation produced NaN or Inf."""


class FormatError(ChronoskillError, ValueError):
    """A file could not be parsed."""


class UnsupportedVersionError(FormatError):
    pass


class RunError(ChronoskillError, RuntimeError):
    """A training or evaluation run failed."""
