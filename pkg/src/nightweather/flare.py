"""Light-source extraction and flare synthesis.

Flare blends an atmospheric-point-spread glow of the extracted light-source
map into the image: out = clip(alpha * X + beta * (L conv K), [0, 1]). The
blend scale beta grows linearly with the light-pixel fraction and saturates
at beta_base.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionMismatch,
    ImageRgb,
    InvalidInput,
    Kernel2d,
    Plane,
    convolve2d,
    gaussian_blur,
    luminance,
)

# Hard light mask requires this absolute luminance besides the percentile,
# so fully dark frames yield no false sources.
LIGHT_FLOOR = 0.85


@dataclass
class FlareParams:
    alpha: float = 0.995
    beta_base: float = 0.3
    rho_ref: float = 1.0 / 64.0
    tau_percentile: float = 99.0
    feather_radius: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidInput("alpha must be in (0, 1]")
        if self.beta_base < 0:
            raise InvalidInput("beta_base must be >= 0")


def extract_light_sources(image: ImageRgb, tau: float = 99.0, feather_radius: float = 2.0) -> Plane:
    """Threshold-then-feather light source map in [0, 1].

    Hard mask: luminance >= max(tau-th percentile, LIGHT_FLOOR). Feathering
    is edge-aware: the blurred hard mask is attenuated by how close each
    pixel's luminance is to the threshold, so glow seeds do not leak into
    dark surroundings.
    """
    if not (0.0 < tau < 100.0):
        raise InvalidInput("tau must be a percentile in (0, 100)")
    lum = luminance(image).data
    thresh = max(float(np.percentile(lum, tau)), LIGHT_FLOOR)
    hard = (lum >= thresh).astype(np.float64)
    if feather_radius <= 0 or not hard.any():
        return Plane(hard)
    soft = gaussian_blur(Plane(hard), feather_radius / 2.0).data
    guide = np.minimum(lum / thresh, 1.0)
    # source pixels stay at full strength; the falloff applies outward only
    return Plane(np.clip(np.maximum(hard, soft * guide), 0.0, 1.0))


def apsf_kernel(size: int, sigma: float, gamma: float) -> Kernel2d:
    """Heavy-tailed radial glow kernel, w(r) = (1 + r/sigma)^(-gamma), normalized."""
    if size % 2 == 0 or size < 3:
        raise InvalidInput("kernel size must be odd and >= 3")
    if sigma <= 0 or gamma <= 0:
        raise InvalidInput("sigma and gamma must be positive")
    c = size // 2
    ax = np.arange(size, dtype=np.float64) - c
    xx, yy = np.meshgrid(ax, ax)
    r = np.sqrt(xx**2 + yy**2)
    w = (1.0 + r / sigma) ** (-gamma)
    return Kernel2d(w / w.sum())


def apply_flare(image: ImageRgb, light: Plane, kernel: Kernel2d, p: FlareParams):
    """Blend APSF glow over the preserved base. Returns (flared image, beta)."""
    if light.data.shape != image.data.shape[:2]:
        raise DimensionMismatch("light map dims do not match image")
    rho = float(np.mean(light.data > 0.5))
    beta = p.beta_base * min(1.0, rho / p.rho_ref) if p.rho_ref > 0 else p.beta_base
    if rho == 0.0:
        return ImageRgb(np.clip(p.alpha * image.data, 0.0, 1.0)), 0.0
    glow = convolve2d(light, kernel).data
    out = np.clip(p.alpha * image.data + beta * glow[:, :, None], 0.0, 1.0)
    return ImageRgb(out), beta
