"""Simulation, exit-time, bridge and inference toolkit for the second-order
speculative bubble diffusion dX = (-a X + b memory) dt + c dB."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import InvalidParameter, NotOscillatoryError, SimulationAborted
from .model import ModelParams, Regime, spectral, turning_transform

__all__ = [
    "__version__",
    "BACKEND",
    "InvalidParameter",
    "NotOscillatoryError",
    "SimulationAborted",
    "ModelParams",
    "Regime",
    "spectral",
    "turning_transform",
]
