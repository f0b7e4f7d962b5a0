"""Exception hierarchy shared by every module."""


class MultiVFLError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MultiVFLError, ValueError):
    """Invalid experiment configuration or inconsistent model/data layout."""


class InputError(MultiVFLError, ValueError):
    """An argument violates the operation's preconditions."""


class FormatError(MultiVFLError, ValueError):
    """A data file is malformed."""


class NumericError(MultiVFLError, ArithmeticError):
    """Non-finite values reached a place where they are not allowed."""


class ProtocolError(MultiVFLError, RuntimeError):
    """Parties exchanged messages with inconsistent shapes."""


class InternalError(MultiVFLError, RuntimeError):
    """Internal invariant broken (mismatched caches, misaligned parameter sets)."""
