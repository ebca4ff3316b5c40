"""Scoring and filtering of candidate nighttime ground-truth images.

Three scores on the luminance plane: average brightness, average gradient
(RMS-combined central differences), and the SMD2 focus measure (product of
absolute central differences). Central differences keep all three scores
exactly invariant under horizontal and vertical flips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImageRgb, InvalidInput, luminance


@dataclass
class CurationScores:
    avg_brightness: float
    avg_gradient: float
    smd2: float


@dataclass
class CurationThresholds:
    min_brightness: float = 0.02
    max_brightness: float = 0.45
    min_gradient: float = 0.002
    min_smd2: float = 1e-6


def score_image(image: ImageRgb) -> CurationScores:
    if image.width < 2 or image.height < 2:
        raise InvalidInput("image must be at least 2x2")
    f = luminance(image).data
    brightness = float(f.mean())
    if image.width < 3 or image.height < 3:
        return CurationScores(brightness, 0.0, 0.0)
    dx = np.abs(f[1:-1, 2:] - f[1:-1, :-2]) / 2.0
    dy = np.abs(f[2:, 1:-1] - f[:-2, 1:-1]) / 2.0
    avg_gradient = float(np.sqrt((dx**2 + dy**2) / 2.0).mean())
    smd2 = float((dx * dy).mean())
    return CurationScores(brightness, avg_gradient, smd2)


def filter_candidates(scores, thresholds: CurationThresholds):
    """Indices of scores passing all thresholds, in stable order."""
    keep = []
    for i, s in enumerate(scores):
        if (
            thresholds.min_brightness <= s.avg_brightness <= thresholds.max_brightness
            and s.avg_gradient >= thresholds.min_gradient
            and s.smd2 >= thresholds.min_smd2
        ):
            keep.append(i)
    return keep
