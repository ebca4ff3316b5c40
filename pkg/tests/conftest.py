"""Shared oracle helpers: deliberately naive reimplementations used to
cross-check the library's vectorized code paths."""

import numpy as np
import pytest

from nightweather.core import ImageRgb, Plane, SeededRng


def random_image(seed: int, h: int = 16, w: int = 16, label: str = "img") -> ImageRgb:
    g = SeededRng(seed, label).generator
    return ImageRgb(g.uniform(0.0, 1.0, (h, w, 3)))


def smooth_image(seed: int, h: int = 32, w: int = 32, label: str = "smooth") -> ImageRgb:
    """Low-frequency texture: random control grid upsampled bilinearly."""
    g = SeededRng(seed, label).generator
    coarse = g.uniform(0.1, 0.9, (max(2, h // 8), max(2, w // 8), 3))
    chans = [bilinear_oracle(coarse[:, :, c], w, h) for c in range(3)]
    return ImageRgb(np.stack(chans, axis=-1))


def conv_oracle(plane: np.ndarray, kernel: np.ndarray, border: str = "replicate") -> np.ndarray:
    """Nested-loop true convolution (kernel flipped) with border handling."""
    h, w = plane.shape
    size = kernel.shape[0]
    r = size // 2
    out = np.zeros_like(plane, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for ky in range(size):
                for kx in range(size):
                    sy = y - (ky - r)
                    sx = x - (kx - r)
                    if border == "replicate":
                        sy = min(max(sy, 0), h - 1)
                        sx = min(max(sx, 0), w - 1)
                    else:  # reflect including the edge sample
                        sy = _reflect(sy, h)
                        sx = _reflect(sx, w)
                    acc += kernel[ky, kx] * plane[sy, sx]
            out[y, x] = acc
    return out


def _reflect(i: int, n: int) -> int:
    period = 2 * n
    i = i % period
    if i < 0:
        i += period
    return i if i < n else period - 1 - i


def gaussian_blur_oracle(plane: np.ndarray, sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(ax**2) / (2.0 * sigma**2))
    k1 /= k1.sum()
    return conv_oracle(plane, np.outer(k1, k1))


def bilinear_oracle(src: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Explicit per-pixel bilinear formula with half-pixel centers."""
    h, w = src.shape[:2]
    out_shape = (new_h, new_w) + src.shape[2:]
    out = np.zeros(out_shape, dtype=np.float64)
    for oy in range(new_h):
        for ox in range(new_w):
            sy = min(max((oy + 0.5) * h / new_h - 0.5, 0.0), h - 1.0)
            sx = min(max((ox + 0.5) * w / new_w - 0.5, 0.0), w - 1.0)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[oy, ox] = (
                src[y0, x0] * (1 - fy) * (1 - fx)
                + src[y0, x1] * (1 - fy) * fx
                + src[y1, x0] * fy * (1 - fx)
                + src[y1, x1] * fy * fx
            )
    return out


@pytest.fixture
def rng():
    return SeededRng(1234, "fixture")
