"""Image containers, convolution, resampling, seeded randomness, and PNG I/O.

All pixel data is floating point with nominal range [0, 1]. Values outside
that range are permitted inside intermediate residual math only; saving to
disk clamps. Every operation here is pure: identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage
from PIL import Image

# Rec.709 luma weights; fixed by design for stable light-source extraction.
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)

# Counter-based generator with published constants; recorded in manifests so
# other implementations can match streams.
RNG_NAME = "philox4x64"


class InvalidInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class InvalidRecipe(ValueError):
    pass


class InvalidConfig(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class DegenerateModel(ValueError):
    pass


class IoError(OSError):
    pass


@dataclass
class Plane:
    """Single-channel float image, shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise InvalidInput(f"plane must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("plane contains non-finite samples")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class ImageRgb:
    """Three-channel float image, shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise InvalidInput(f"image must have shape (H, W, 3), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("image contains non-finite samples")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def same_shape(self, other: "ImageRgb") -> bool:
        return self.data.shape == other.data.shape


@dataclass
class Kernel2d:
    """Square odd-sized convolution kernel."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1]:
            raise InvalidInput("kernel must be square")
        if self.weights.shape[0] % 2 == 0 or self.weights.shape[0] < 1:
            raise InvalidInput("kernel size must be odd and >= 1")
        if not np.all(np.isfinite(self.weights)):
            raise InvalidInput("kernel weights must be finite")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2


@dataclass
class SeededRng:
    """Named stream of a counter-based generator.

    Identical (seed, label) pairs yield identical sample sequences on all
    platforms; distinct labels decorrelate.
    """

    seed: int
    label: str = ""
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        digest = hashlib.sha256(f"{self.seed}:{self.label}".encode()).digest()
        key = np.frombuffer(digest, dtype=np.uint64)[:2]
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, label: str) -> "SeededRng":
        return SeededRng(self.seed, f"{self.label}/{label}")

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


_BORDER_MODES = {"replicate": "nearest", "reflect": "reflect"}


def convolve2d(plane: Plane, kernel: Kernel2d, border: str = "replicate") -> Plane:
    """True 2-D convolution (kernel flipped), output dims equal input dims."""
    if plane.data.size == 0:
        raise InvalidInput("empty image")
    if border not in _BORDER_MODES:
        raise InvalidInput(f"unknown border mode {border!r}")
    out = scipy.ndimage.convolve(plane.data, kernel.weights, mode=_BORDER_MODES[border])
    return Plane(out)


def gaussian_kernel(sigma: float, radius: int) -> Kernel2d:
    if sigma <= 0:
        raise InvalidInput("sigma must be positive")
    if radius < 0:
        raise InvalidInput("radius must be >= 0")
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    w = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    return Kernel2d(w / w.sum())


def gaussian_blur(plane: Plane, sigma: float, border: str = "replicate") -> Plane:
    """Separable Gaussian blur with radius ceil(3*sigma)."""
    if sigma <= 0:
        return Plane(plane.data.copy())
    radius = int(np.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(ax**2) / (2.0 * sigma**2))
    k /= k.sum()
    mode = _BORDER_MODES.get(border)
    if mode is None:
        raise InvalidInput(f"unknown border mode {border!r}")
    out = scipy.ndimage.correlate1d(plane.data, k, axis=0, mode=mode)
    out = scipy.ndimage.correlate1d(out, k, axis=1, mode=mode)
    return Plane(out)


def luminance(image: ImageRgb) -> Plane:
    r, g, b = LUMA_WEIGHTS
    return Plane(r * image.data[:, :, 0] + g * image.data[:, :, 1] + b * image.data[:, :, 2])


def resize_bilinear(plane: Plane, new_width: int, new_height: int) -> Plane:
    """Bilinear resample with half-pixel-center sample mapping."""
    if new_width < 1 or new_height < 1:
        raise InvalidInput("target dimensions must be >= 1")
    h, w = plane.data.shape
    if (new_height, new_width) == (h, w):
        return Plane(plane.data.copy())
    ys = (np.arange(new_height, dtype=np.float64) + 0.5) * (h / new_height) - 0.5
    xs = (np.arange(new_width, dtype=np.float64) + 0.5) * (w / new_width) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    d = plane.data
    top = d[np.ix_(y0, x0)] * (1 - fx) + d[np.ix_(y0, x1)] * fx
    bot = d[np.ix_(y1, x0)] * (1 - fx) + d[np.ix_(y1, x1)] * fx
    return Plane(top * (1 - fy) + bot * fy)


def resize_bilinear_rgb(image: ImageRgb, new_width: int, new_height: int) -> ImageRgb:
    chans = [resize_bilinear(Plane(image.data[:, :, c]), new_width, new_height).data for c in range(3)]
    return ImageRgb(np.stack(chans, axis=-1))


def load_png(path) -> ImageRgb:
    """Load an 8-bit PNG as RGB floats, v/255."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except OSError as e:
        raise IoError(str(e)) from e
    return ImageRgb(arr / 255.0)


def load_png_plane(path) -> Plane:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except OSError as e:
        raise IoError(str(e)) from e
    return Plane(arr / 255.0)


def _to_uint8(data: np.ndarray) -> np.ndarray:
    return np.clip(np.round(data * 255.0), 0, 255).astype(np.uint8)


def save_png(image: ImageRgb, path) -> None:
    """Save as 8-bit PNG, round(v*255) clamped."""
    try:
        Image.fromarray(_to_uint8(image.data), mode="RGB").save(path, format="PNG")
    except OSError as e:
        raise IoError(str(e)) from e


def save_png_plane(plane: Plane, path) -> None:
    try:
        Image.fromarray(_to_uint8(plane.data), mode="L").save(path, format="PNG")
    except OSError as e:
        raise IoError(str(e)) from e
