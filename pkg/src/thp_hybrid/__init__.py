"""Nonlinear THP hybrid analog/digital transceiver design for multiuser mmWave downlinks."""

from .config import ConfigError, SystemConfig
from .core import DimensionError, PermutationError
from .objective import TransceiverState, kkt_residual, mse, mse_sigma, theorem1_scale

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DimensionError", "PermutationError", "SystemConfig", "TransceiverState",
    "kkt_residual", "mse", "mse_sigma", "theorem1_scale",
]
