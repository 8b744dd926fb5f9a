"""Two-stage Walsh-Hadamard source feature compression for CNN classification."""
from ._backend import BACKEND
from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    NumericError,
    ShapeError,
    SizeError,
    WhtpackError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "NumericError",
    "ShapeError",
    "SizeError",
    "WhtpackError",
]
