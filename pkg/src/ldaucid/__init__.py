"""Continual unsupervised domain adaptation with a consolidated embedding mixture,
sliced-Wasserstein alignment and mean-of-features replay."""
from ._accel import backend
from .exceptions import ConfigError, ParseError, PseudoSetEmptyError, ShapeError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "backend",
    "ConfigError",
    "ParseError",
    "PseudoSetEmptyError",
    "ShapeError",
    "ValidationError",
]
