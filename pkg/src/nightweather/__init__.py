"""Deterministic nighttime multi-weather degradation synthesis and evaluation."""

from .core import (
    DegenerateModel,
    DimensionMismatch,
    ImageRgb,
    InsufficientData,
    InvalidConfig,
    InvalidInput,
    InvalidRecipe,
    IoError,
    Kernel2d,
    Plane,
    SeededRng,
)

__all__ = [
    "ImageRgb",
    "Plane",
    "Kernel2d",
    "SeededRng",
    "InvalidInput",
    "DimensionMismatch",
    "InvalidRecipe",
    "InvalidConfig",
    "InsufficientData",
    "DegenerateModel",
    "IoError",
]

__version__ = "0.1.0"
