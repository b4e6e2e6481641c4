"""Rotation-equivariant (2+1)D CNNs with Fourier-parametrized filters inside an
unrolled proximal-gradient reconstruction model for dynamic MRI."""

from .equivariant import RotationGroup
from .model import UnrolledConfig, build_model, load_model, reconstruct, save_model
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "RotationGroup",
    "Tensor",
    "UnrolledConfig",
    "backward",
    "build_model",
    "load_model",
    "no_grad",
    "reconstruct",
    "save_model",
]
