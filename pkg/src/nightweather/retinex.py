"""Illumination/reflectance decomposition and multi-scale prior pyramids.

The illumination estimate is a single-scale Retinex: Gaussian blur of the
per-pixel max channel, clamped to [eps, 1]. Reflectance is the pixelwise
quotient, left unclamped above 1 so that reflectance * illumination
reconstructs the input wherever the clamp was inactive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ImageRgb, InvalidInput, Plane, gaussian_blur, resize_bilinear

DEFAULT_SIGMA = 5.0
DEFAULT_EPS = 1e-3


@dataclass
class RetinexPair:
    illumination: Plane
    reflectance: ImageRgb


@dataclass
class PriorPyramid:
    level1: Plane
    level2: Plane
    level3: Plane

    @property
    def levels(self):
        return (self.level1, self.level2, self.level3)


def decompose(image: ImageRgb, blur_sigma: float = DEFAULT_SIGMA, eps: float = DEFAULT_EPS) -> RetinexPair:
    if not (0.0 < eps <= 0.1):
        raise InvalidInput("eps must be in (0, 0.1]")
    if blur_sigma <= 0:
        raise InvalidInput("blur_sigma must be positive")
    max_channel = Plane(image.data.max(axis=2))
    illum = np.clip(gaussian_blur(max_channel, blur_sigma).data, eps, 1.0)
    reflectance = image.data / illum[:, :, None]
    return RetinexPair(Plane(illum), ImageRgb(reflectance))


def prior_pyramid(plane: Plane) -> PriorPyramid:
    """Three levels at full, half, and quarter resolution via bilinear halving."""
    if plane.width < 4 or plane.height < 4:
        raise InvalidInput("pyramid input must be at least 4x4")
    level1 = Plane(plane.data.copy())
    w2, h2 = math.ceil(plane.width / 2), math.ceil(plane.height / 2)
    level2 = resize_bilinear(level1, w2, h2)
    w3, h3 = math.ceil(w2 / 2), math.ceil(h2 / 2)
    level3 = resize_bilinear(level2, w3, h3)
    return PriorPyramid(level1, level2, level3)
