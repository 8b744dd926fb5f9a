"""Exception hierarchy shared by every whtpack module."""


class WhtpackError(Exception):
    """Base class for all whtpack errors."""


class SizeError(WhtpackError, ValueError):
    """An array has the wrong length, shape or is empty."""


class DomainError(WhtpackError, ValueError):
    """Input values lie outside the operation's domain (non-finite, wrong kind, ...)."""


class ConfigError(WhtpackError, ValueError):
    """Invalid user configuration."""


class ShapeError(WhtpackError, ValueError):
    """Layer shapes do not compose or a batch does not match the model input."""


class NumericError(WhtpackError, ArithmeticError):
    """A non-finite value appeared during a network computation."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class DivergenceError(NumericError):
    """Training loss became non-finite."""
