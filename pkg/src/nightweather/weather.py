"""Weather effect generators: haze, rain streak, raindrop, snow.

Each generator emits a signed residual layer with the same shape as the
source image. Composition, illumination weighting, and clipping happen in
the compose module, so residuals stay unclipped here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from skimage.draw import ellipse as draw_ellipse
from skimage.draw import polygon as draw_polygon

from .core import (
    DimensionMismatch,
    ImageRgb,
    InvalidInput,
    Kernel2d,
    Plane,
    SeededRng,
    convolve2d,
    gaussian_blur,
    load_png_plane,
    resize_bilinear,
)


class WeatherEffect(enum.Enum):
    HAZE = "H"
    RAIN_STREAK = "RS"
    RAINDROP = "RD"
    SNOW = "S"


@dataclass
class ResidualLayer:
    """Signed per-pixel additive contribution of one weather effect."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise InvalidInput("residual must have shape (H, W, 3)")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("residual contains non-finite values")


@dataclass
class HazeParams:
    airlight: Tuple[float, float, float] = (0.7, 0.7, 0.72)
    beta: float = 1.0
    # Exactly one depth source: a constant, a (near, far) vertical gradient
    # (near = bottom row), or an external plane matching the image.
    depth_constant: Optional[float] = 1.0
    depth_gradient: Optional[Tuple[float, float]] = None
    depth_plane: Optional[Plane] = None


@dataclass
class RainStreakParams:
    angle_deg: float = 10.0  # from vertical
    streak_length: int = 9
    density: float = 0.1
    noise_threshold: float = 0.5
    upsample_factor: int = 4
    intensity: float = 0.6


@dataclass
class RaindropParams:
    drop_count: int = 8
    radius_range: Tuple[float, float] = (3.0, 8.0)
    jitter: float = 1.5
    blur_sigma: float = 1.0
    darkening: float = 0.85
    control_points: int = 8


@dataclass
class SnowParams:
    mask_path: Optional[str] = None
    density: float = 0.3
    scale_range: Tuple[float, float] = (1.0, 3.0)
    brightness: float = 0.9


def _depth_map(image: ImageRgb, p: HazeParams) -> np.ndarray:
    if p.depth_plane is not None:
        if p.depth_plane.data.shape != image.data.shape[:2]:
            raise DimensionMismatch("depth plane dims do not match image")
        return p.depth_plane.data
    if p.depth_gradient is not None:
        near, far = p.depth_gradient
        h = image.height
        rows = np.linspace(far, near, h) if h > 1 else np.array([near], dtype=np.float64)
        return np.repeat(rows[:, None], image.width, axis=1)
    if p.depth_constant is None:
        raise InvalidInput("haze params specify no depth source")
    return np.full(image.data.shape[:2], float(p.depth_constant))


def gen_haze(image: ImageRgb, p: HazeParams) -> ResidualLayer:
    """Atmospheric scattering residual (A - X) * (1 - exp(-beta * depth))."""
    a = np.asarray(p.airlight, dtype=np.float64)
    if a.shape != (3,) or np.any(a < 0) or np.any(a > 1):
        raise InvalidInput("airlight must be 3 values in [0, 1]")
    if p.beta < 0:
        raise InvalidInput("scattering coefficient must be >= 0")
    t = np.exp(-p.beta * _depth_map(image, p))
    return ResidualLayer((a[None, None, :] - image.data) * (1.0 - t)[:, :, None])


def line_kernel(angle_deg: float, length: int) -> Kernel2d:
    """Normalized motion-blur kernel: Bresenham line at angle from vertical."""
    if length < 1:
        raise InvalidInput("streak length must be >= 1")
    size = length if length % 2 == 1 else length + 1
    k = np.zeros((size, size), dtype=np.float64)
    c = size // 2
    theta = math.radians(angle_deg)
    dx, dy = math.sin(theta), math.cos(theta)
    half = (length - 1) / 2.0
    x0, y0 = int(round(c - dx * half)), int(round(c - dy * half))
    x1, y1 = int(round(c + dx * half)), int(round(c + dy * half))
    for x, y in _bresenham(x0, y0, x1, y1):
        if 0 <= x < size and 0 <= y < size:
            k[y, x] = 1.0
    if k.sum() == 0:
        k[c, c] = 1.0
    return Kernel2d(k / k.sum())


def _bresenham(x0: int, y0: int, x1: int, y1: int):
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return points


def gen_rain_streak(image: ImageRgb, p: RainStreakParams, rng: SeededRng) -> ResidualLayer:
    """Interpolated-noise rain streaks.

    Pipeline: low-res Gaussian noise, bilinear upsample, min-max normalize,
    cutoff at max(noise_threshold, (1-density)-quantile), directional motion
    blur, scale by intensity. Residual is non-negative (brightening only).
    """
    if not (0.0 <= p.density <= 1.0):
        raise InvalidInput("density must be in [0, 1]")
    if p.upsample_factor < 1:
        raise InvalidInput("upsample factor must be >= 1")
    h, w = image.height, image.width
    if p.density == 0.0:
        return ResidualLayer(np.zeros((h, w, 3)))
    lh = max(1, math.ceil(h / p.upsample_factor))
    lw = max(1, math.ceil(w / p.upsample_factor))
    noise = rng.generator.normal(0.0, 1.0, size=(lh, lw))
    up = resize_bilinear(Plane(noise), w, h).data
    lo, hi = up.min(), up.max()
    if hi - lo < 1e-12:
        return ResidualLayer(np.zeros((h, w, 3)))
    norm = (up - lo) / (hi - lo)
    cutoff = max(float(np.quantile(norm, 1.0 - p.density)), p.noise_threshold)
    if cutoff >= 1.0:
        return ResidualLayer(np.zeros((h, w, 3)))
    seeds = np.clip((norm - cutoff) / (1.0 - cutoff), 0.0, 1.0)
    blurred = convolve2d(Plane(seeds), line_kernel(p.angle_deg, p.streak_length)).data
    streaks = np.clip(blurred * p.intensity, 0.0, None)
    return ResidualLayer(np.repeat(streaks[:, :, None], 3, axis=2))


def _drop_polygon(cx: float, cy: float, radius: float, jitter: float, n_ctrl: int, rng: SeededRng):
    """Closed curve of quadratic Bezier segments through jittered circle points."""
    angles = 2.0 * np.pi * np.arange(n_ctrl) / n_ctrl
    radii = radius + rng.generator.uniform(-jitter, jitter, size=n_ctrl)
    px = cx + radii * np.cos(angles)
    py = cy + radii * np.sin(angles)
    ts = np.linspace(0.0, 1.0, 20, endpoint=False)
    xs, ys = [], []
    for i in range(n_ctrl):
        j = (i + 1) % n_ctrl
        m0 = (np.array([px[i], py[i]]) + np.array([px[i - 1], py[i - 1]])) / 2.0
        m1 = (np.array([px[j], py[j]]) + np.array([px[i], py[i]])) / 2.0
        ctrl = np.array([px[i], py[i]])
        for t in ts:
            b = (1 - t) ** 2 * m0 + 2 * (1 - t) * t * ctrl + t**2 * m1
            xs.append(b[0])
            ys.append(b[1])
    return np.array(xs), np.array(ys)


def gen_raindrop(image: ImageRgb, p: RaindropParams, rng: SeededRng) -> ResidualLayer:
    """Raindrops as Bezier-bounded regions filled with blurred, darkened content."""
    if p.drop_count < 0:
        raise InvalidInput("drop count must be >= 0")
    h, w = image.height, image.width
    if p.drop_count == 0:
        return ResidualLayer(np.zeros((h, w, 3)))
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(p.drop_count):
        cx = rng.generator.uniform(0, w)
        cy = rng.generator.uniform(0, h)
        radius = rng.generator.uniform(*p.radius_range)
        xs, ys = _drop_polygon(cx, cy, radius, p.jitter, p.control_points, rng)
        rr, cc = draw_polygon(ys, xs, shape=(h, w))
        mask[rr, cc] = True
    if p.blur_sigma > 0:
        content = np.stack(
            [gaussian_blur(Plane(image.data[:, :, c]), p.blur_sigma).data for c in range(3)], axis=-1
        )
    else:
        content = image.data.copy()
    content *= p.darkening
    residual = np.where(mask[:, :, None], content - image.data, 0.0)
    return ResidualLayer(residual)


def procedural_snow_mask(h: int, w: int, p: SnowParams, rng: SeededRng) -> np.ndarray:
    """Blurred elliptical flakes; flake count scales with density and area."""
    n_flakes = int(round(p.density * h * w / 64.0))
    mask = np.zeros((h, w), dtype=np.float64)
    for _ in range(n_flakes):
        cy = rng.generator.uniform(0, h)
        cx = rng.generator.uniform(0, w)
        a = rng.generator.uniform(*p.scale_range)
        b = rng.generator.uniform(*p.scale_range)
        rot = rng.generator.uniform(0, np.pi)
        canvas = np.zeros((h, w), dtype=np.float64)
        rr, cc = draw_ellipse(cy, cx, a, b, shape=(h, w), rotation=rot)
        canvas[rr, cc] = 1.0
        sigma = 0.3 * min(a, b)
        if sigma > 0:
            canvas = gaussian_blur(Plane(canvas), sigma).data
        mask = np.maximum(mask, canvas)
    return np.clip(mask, 0.0, 1.0)


def _placed_snow_mask(h: int, w: int, p: SnowParams, rng: SeededRng) -> np.ndarray:
    base = load_png_plane(p.mask_path)
    n_place = max(1, int(round(p.density * 10)))
    mask = np.zeros((h, w), dtype=np.float64)
    for _ in range(n_place):
        factor = rng.generator.uniform(*p.scale_range)
        mh = max(1, int(round(base.height * factor)))
        mw = max(1, int(round(base.width * factor)))
        tile = resize_bilinear(base, mw, mh).data
        top = int(rng.generator.integers(-mh + 1, h))
        left = int(rng.generator.integers(-mw + 1, w))
        y0, x0 = max(top, 0), max(left, 0)
        y1, x1 = min(top + mh, h), min(left + mw, w)
        if y1 <= y0 or x1 <= x0:
            continue
        sub = tile[y0 - top : y1 - top, x0 - left : x1 - left]
        mask[y0:y1, x0:x1] = np.maximum(mask[y0:y1, x0:x1], sub)
    return np.clip(mask, 0.0, 1.0)


def gen_snow(image: ImageRgb, p: SnowParams, rng: SeededRng) -> ResidualLayer:
    """Screen-style brightening toward white under a snowflake mask."""
    if not (0.0 <= p.density <= 1.0):
        raise InvalidInput("density must be in [0, 1]")
    h, w = image.height, image.width
    if p.density == 0.0:
        return ResidualLayer(np.zeros((h, w, 3)))
    if p.mask_path is not None:
        mask = _placed_snow_mask(h, w, p, rng)
    else:
        mask = procedural_snow_mask(h, w, p, rng)
    residual = mask[:, :, None] * p.brightness * (1.0 - image.data)
    return ResidualLayer(residual)
