"""Alias-free vision transformer building blocks on numpy.

Submodules: :mod:`~afvit.tensor`, :mod:`~afvit.spectral`,
:mod:`~afvit.attention`, :mod:`~afvit.layers`, :mod:`~afvit.model` and
:mod:`~afvit.harness`.
"""

from .model import ModelConfig, forward, init_weights, load_weights, predict, save_weights
from .spectral import ShiftVector, cyclic_shift_fractional, downsample_af, upsample_af
from .tensor import ShapeError, TokenMap

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "ShapeError",
    "ShiftVector",
    "TokenMap",
    "cyclic_shift_fractional",
    "downsample_af",
    "forward",
    "init_weights",
    "load_weights",
    "predict",
    "save_weights",
    "upsample_af",
]
