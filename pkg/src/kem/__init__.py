"""Kernel epsilon-machines: causal states of time series in a reproducing
kernel Hilbert space, their diffusion-map geometry, evolution operator and
forecasts.
"""

from .errors import (
    DegenerateEvolutionError,
    DegenerateInputError,
    IntegrationError,
    KemError,
    NumericError,
    OutOfSupportError,
    ValidationError,
)
from .model import KernelEMachine, ModelConfig, fit, load_model, save_model

from .model import __version__

__all__ = [
    "KemError",
    "ValidationError",
    "NumericError",
    "IntegrationError",
    "DegenerateInputError",
    "OutOfSupportError",
    "DegenerateEvolutionError",
    "KernelEMachine",
    "ModelConfig",
    "fit",
    "load_model",
    "save_model",
]
