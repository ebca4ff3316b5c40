"""Full-reference quality metrics: PSNR, SSIM, and L1."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d as _conv2

from .core import DimensionMismatch, ImageRgb, InvalidInput


@dataclass
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = 1.0

    def __post_init__(self):
        if self.window_size % 2 == 0 or self.window_size < 1:
            raise InvalidInput("window size must be odd")
        if self.peak <= 0:
            raise InvalidInput("peak must be positive")


def _check_dims(a: ImageRgb, b: ImageRgb):
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"{a.data.shape} vs {b.data.shape}")


def psnr(a: ImageRgb, b: ImageRgb, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) over all channels; inf when images are equal."""
    _check_dims(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def l1_loss(a: ImageRgb, b: ImageRgb) -> float:
    _check_dims(a, b)
    return float(np.mean(np.abs(a.data - b.data)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: ImageRgb, b: ImageRgb, p: SsimParams = SsimParams()) -> float:
    """Mean SSIM with Gaussian weighting over valid windows, averaged over channels."""
    _check_dims(a, b)
    if a.width < p.window_size or a.height < p.window_size:
        raise InvalidInput("image smaller than SSIM window")
    win = _gaussian_window(p.window_size, p.window_sigma)
    c1 = (p.k1 * p.peak) ** 2
    c2 = (p.k2 * p.peak) ** 2
    values = []
    for c in range(3):
        x = a.data[:, :, c]
        y = b.data[:, :, c]
        mu_x = _conv2(x, win, mode="valid")
        mu_y = _conv2(y, win, mode="valid")
        sxx = _conv2(x * x, win, mode="valid") - mu_x**2
        syy = _conv2(y * y, win, mode="valid") - mu_y**2
        sxy = _conv2(x * y, win, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
        values.append(num / den)
    return float(np.mean(values))
