"""No-reference quality scoring from natural-scene statistics.

A pristine model is fitted from a corpus: MSCN coefficients at two scales,
asymmetric generalized Gaussian (AGGD) features per patch (18 per scale, 36
total), then the sample mean and covariance over the sharpest patches.
Scores are Mahalanobis-style distances to that model; lower is more
natural. The model ships as JSON, so scores are self-consistent rather
than comparable to third-party fitted parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.special

from .core import (
    DegenerateModel,
    ImageRgb,
    InsufficientData,
    InvalidInput,
    Plane,
    gaussian_blur,
    luminance,
    resize_bilinear,
)

SCHEMA_VERSION = 1
MSCN_C = 1.0 / 255.0  # variance floor for [0,1] images
_AGGD_EPS = 1e-10

# Inverse lookup for the AGGD shape parameter: r(alpha) is monotone
# increasing on the grid, inverted by linear interpolation.
_ALPHA_GRID = np.arange(0.2, 10.0 + 1e-9, 0.001)
_R_GRID = (
    scipy.special.gamma(2.0 / _ALPHA_GRID) ** 2
    / (scipy.special.gamma(1.0 / _ALPHA_GRID) * scipy.special.gamma(3.0 / _ALPHA_GRID))
)


@dataclass
class NiqeModel:
    mean: np.ndarray  # 36-vector
    cov: np.ndarray  # 36x36
    patch_size: int = 96
    sharpness_fraction: float = 0.75

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        if self.mean.shape != (36,) or self.cov.shape != (36, 36):
            raise InvalidInput("model must carry a 36-vector mean and 36x36 covariance")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-9:
            raise InvalidInput("covariance must be symmetric")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "patch_size": self.patch_size,
            "sharpness_fraction": self.sharpness_fraction,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NiqeModel":
        return cls(
            mean=np.array(d["mean"]),
            cov=np.array(d["cov"]),
            patch_size=d["patch_size"],
            sharpness_fraction=d["sharpness_fraction"],
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "NiqeModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def fit_aggd(x: np.ndarray):
    """Moment-matching AGGD fit; returns (alpha, left_std, right_std)."""
    x = x.ravel()
    if x.size == 0 or float(np.mean(x**2)) < _AGGD_EPS:
        return 1.0, _AGGD_EPS, _AGGD_EPS
    left = x[x < 0]
    right = x[x > 0]
    left_std = np.sqrt(np.mean(left**2)) if left.size else _AGGD_EPS
    right_std = np.sqrt(np.mean(right**2)) if right.size else _AGGD_EPS
    gamma_hat = left_std / right_std
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x**2)
    r_hat_norm = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    alpha = float(np.interp(r_hat_norm, _R_GRID, _ALPHA_GRID))
    return alpha, float(left_std), float(right_std)


def mscn(plane: Plane) -> tuple[np.ndarray, np.ndarray]:
    """Mean-subtracted contrast-normalized coefficients and the sigma field."""
    f = plane.data
    mu = gaussian_blur(Plane(f), 7.0 / 6.0).data
    sigma = np.sqrt(np.abs(gaussian_blur(Plane(f * f), 7.0 / 6.0).data - mu**2))
    return (f - mu) / (sigma + MSCN_C), sigma


def _pair_products(m: np.ndarray):
    return (
        m[:, :-1] * m[:, 1:],  # horizontal
        m[:-1, :] * m[1:, :],  # vertical
        m[:-1, :-1] * m[1:, 1:],  # main diagonal
        m[:-1, 1:] * m[1:, :-1],  # anti-diagonal
    )


def _scale_features(m: np.ndarray) -> list[float]:
    feats: list[float] = []
    alpha, lstd, rstd = fit_aggd(m)
    feats += [alpha, (lstd**2 + rstd**2) / 2.0]
    for prod in _pair_products(m):
        alpha, lstd, rstd = fit_aggd(prod)
        ratio = scipy.special.gamma(2.0 / alpha) / scipy.special.gamma(1.0 / alpha)
        mean_param = (rstd - lstd) * ratio
        feats += [alpha, mean_param, lstd**2, rstd**2]
    return feats


def _patch_grid(h: int, w: int, size: int):
    for y in range(0, h - size + 1, size):
        for x in range(0, w - size + 1, size):
            yield y, x


def extract_features(image: ImageRgb, patch_size: int, sharpness_fraction=None):
    """Per-patch 36-vectors (both scales); sharpness selection optional."""
    if patch_size % 2 != 0 or patch_size < 8:
        raise InvalidInput("patch size must be even and >= 8")
    lum = luminance(image)
    if lum.height < patch_size or lum.width < patch_size:
        raise InvalidInput("image smaller than one patch")
    m1, sigma1 = mscn(lum)
    half = resize_bilinear(lum, max(1, lum.width // 2), max(1, lum.height // 2))
    m2, _ = mscn(half)

    coords = list(_patch_grid(lum.height, lum.width, patch_size))
    sharpness = np.array([sigma1[y : y + patch_size, x : x + patch_size].mean() for y, x in coords])
    if sharpness_fraction is not None:
        thresh = sharpness_fraction * sharpness.max()
        keep = [i for i, s in enumerate(sharpness) if s >= thresh]
    else:
        keep = list(range(len(coords)))

    hs = patch_size // 2
    feats = []
    for i in keep:
        y, x = coords[i]
        p1 = m1[y : y + patch_size, x : x + patch_size]
        p2 = m2[y // 2 : y // 2 + hs, x // 2 : x // 2 + hs]
        feats.append(_scale_features(p1) + _scale_features(p2))
    return np.array(feats, dtype=np.float64)


def niqe_fit(corpus, patch_size: int = 96, sharpness_fraction: float = 0.75) -> NiqeModel:
    all_feats = []
    for image in corpus:
        all_feats.append(extract_features(image, patch_size, sharpness_fraction))
    feats = np.concatenate(all_feats, axis=0) if all_feats else np.empty((0, 36))
    if feats.shape[0] < 36:
        raise InsufficientData(f"need >= 36 patches, got {feats.shape[0]}")
    mean = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    cov = (cov + cov.T) / 2.0
    if float(np.max(np.diag(cov))) < 1e-12:
        raise DegenerateModel("corpus features have no variance")
    return NiqeModel(mean=mean, cov=cov, patch_size=patch_size, sharpness_fraction=sharpness_fraction)


def nss_distance(nu: np.ndarray, mu: np.ndarray, cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """sqrt((nu-mu)^T ((cov_a+cov_b)/2)^-1 (nu-mu)), pseudo-inverse fallback."""
    pooled = (np.asarray(cov_a) + np.asarray(cov_b)) / 2.0
    d = np.asarray(nu) - np.asarray(mu)
    try:
        sol = np.linalg.solve(pooled, d)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.pinv(pooled) @ d
    return float(np.sqrt(max(0.0, float(d @ sol))))


def niqe_score(image: ImageRgb, model: NiqeModel) -> float:
    feats = extract_features(image, model.patch_size)
    nu = feats.mean(axis=0)
    cov_img = np.cov(feats, rowvar=False) if feats.shape[0] > 1 else np.zeros((36, 36))
    return nss_distance(nu, model.mean, model.cov, cov_img)
