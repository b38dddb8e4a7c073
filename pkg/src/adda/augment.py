"""Image augmentation operators and frequency-gated compositions.

Images are float32 arrays in CHW order with pixels in [0, 1].  Every operator
clamps on write, so the pixel range is preserved by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .numerics import RngStream

JITTER = "jitter"
GRAYSCALE = "grayscale"
BLUR = "blur"
FLIP = "flip"
OP_ORDER = (JITTER, GRAYSCALE, BLUR, FLIP)

LUMA = (0.299, 0.587, 0.114)

# Frequencies for jitter, grayscale, blur and flip used by MoCo v2.
DEFAULT_FREQUENCIES = (0.8, 0.2, 0.5, 0.5)
DEFAULT_JITTER = (0.4, 0.4, 0.4)
# Blur sigma scaled from (0.1, 2.0) at 224px to 16px inputs.
DEFAULT_SIGMA = (0.1, 1.0)
DEFAULT_CROP_SCALE = (0.2, 1.0)


def _clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0).astype(np.float32, copy=False)


def as_image(pixels) -> np.ndarray:
    img = np.asarray(pixels, dtype=np.float32)
    if img.ndim != 3:
        raise ParameterError(f"expected a CHW image, got shape {img.shape}")
    return img


@dataclass(frozen=True)
class AugOpSpec:
    kind: str
    frequency: float
    strengths: tuple = DEFAULT_JITTER
    sigma_range: tuple = DEFAULT_SIGMA

    def __post_init__(self):
        if self.kind not in OP_ORDER:
            raise ParameterError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.frequency <= 1.0:
            raise ParameterError(f"{self.kind} frequency {self.frequency} outside [0, 1]")
        if self.kind == JITTER and (len(self.strengths) != 3 or min(self.strengths) < 0):
            raise ParameterError(f"jitter strengths must be three non-negative reals, got {self.strengths}")
        if self.kind == BLUR:
            lo, hi = self.sigma_range
            if not 0 < lo <= hi:
                raise ParameterError(f"blur sigma range must be positive and ordered, got {self.sigma_range}")


@dataclass(frozen=True)
class CropSpec:
    scale: tuple = DEFAULT_CROP_SCALE
    out_hw: tuple | None = None  # None keeps the input size

    def __post_init__(self):
        lo, hi = self.scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ParameterError(f"crop scale range {self.scale} must lie in (0, 1]")
        if self.out_hw is not None and min(self.out_hw) < 2:
            raise ParameterError(f"crop output size {self.out_hw} must be at least 2x2")


@dataclass(frozen=True)
class Composition:
    """One augmentation composition: a random resized crop followed by gated ops."""

    id: int
    crop: CropSpec = field(default_factory=CropSpec)
    ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        ranks = [OP_ORDER.index(op.kind) for op in self.ops]
        if ranks != sorted(set(ranks)):
            raise ParameterError(
                f"composition {self.id}: ops must be distinct and ordered as {OP_ORDER}"
            )

    @classmethod
    def standard(cls, id, jitter=DEFAULT_FREQUENCIES[0], grayscale=DEFAULT_FREQUENCIES[1],
                 blur=DEFAULT_FREQUENCIES[2], flip=DEFAULT_FREQUENCIES[3],
                 crop_scale=DEFAULT_CROP_SCALE, strengths=DEFAULT_JITTER,
                 sigma_range=DEFAULT_SIGMA, out_hw=None):
        ops = (
            AugOpSpec(JITTER, jitter, strengths=tuple(strengths)),
            AugOpSpec(GRAYSCALE, grayscale),
            AugOpSpec(BLUR, blur, sigma_range=tuple(sigma_range)),
            AugOpSpec(FLIP, flip),
        )
        return cls(id, CropSpec(tuple(crop_scale), out_hw), ops)

    def frequency(self, kind):
        for op in self.ops:
            if op.kind == kind:
                return op.frequency
        return 0.0


def _resize_axis(n_in, n_out):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = (src - i0).astype(np.float32)
    return i0, i1, w


def resize_bilinear(img: np.ndarray, out_hw) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping."""
    h_out, w_out = out_hw
    _, h, w = img.shape
    y0, y1, wy = _resize_axis(h, h_out)
    x0, x1, wx = _resize_axis(w, w_out)
    rows = img[:, y0, :] * (1 - wy)[None, :, None] + img[:, y1, :] * wy[None, :, None]
    out = rows[:, :, x0] * (1 - wx)[None, None, :] + rows[:, :, x1] * wx[None, None, :]
    return _clamp(out)


def random_crop_resize(img, out_hw, scale_range, rng: RngStream) -> np.ndarray:
    img = as_image(img)
    lo, hi = scale_range
    if not 0.0 < lo <= hi <= 1.0:
        raise ParameterError(f"crop scale range {scale_range} must lie in (0, 1]")
    if min(out_hw) < 2:
        raise ParameterError(f"crop output size {out_hw} must be at least 2x2")
    _, h, w = img.shape
    side = math.sqrt(rng.uniform_range(lo, hi))
    if h * side < 1.0 or w * side < 1.0:
        raise ParameterError(f"crop window {h * side:.3f}x{w * side:.3f} is below one pixel")
    ch = min(max(int(round(h * side)), 1), h)
    cw = min(max(int(round(w * side)), 1), w)
    top = rng.integer(h - ch + 1)
    left = rng.integer(w - cw + 1)
    return resize_bilinear(img[:, top:top + ch, left:left + cw], out_hw)


def luminance(img: np.ndarray) -> np.ndarray:
    # float64 weights with a single rounding keep gray pixels exactly fixed
    r, g, b = LUMA
    x = img.astype(np.float64)
    return (r * x[0] + g * x[1] + b * x[2]).astype(np.float32)


def adjust_brightness(img, factor):
    return _clamp(img * np.float32(factor))


def adjust_contrast(img, factor):
    mean = np.float32(luminance(img).mean(dtype=np.float64))
    return _clamp(mean + np.float32(factor) * (img - mean))


def adjust_saturation(img, factor):
    lum = luminance(img)[None]
    return _clamp(lum + np.float32(factor) * (img - lum))


def color_jitter(img, strengths, rng: RngStream) -> np.ndarray:
    """Brightness, then contrast, then saturation, each factor uniform in [1-s, 1+s]."""
    img = as_image(img)
    if min(strengths) < 0:
        raise ParameterError(f"jitter strengths must be non-negative, got {strengths}")
    for strength, adjust in zip(strengths, (adjust_brightness, adjust_contrast, adjust_saturation)):
        if strength > 0:
            img = adjust(img, rng.uniform_range(max(0.0, 1.0 - strength), 1.0 + strength))
    return img


def grayscale(img) -> np.ndarray:
    img = as_image(img)
    if img.shape[0] != 3:
        raise ParameterError(f"grayscale needs 3 channels, got {img.shape[0]}")
    lum = _clamp(luminance(img))
    return np.repeat(lum[None], 3, axis=0)


def gaussian_kernel(sigma):
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return (k / k.sum()).astype(np.float32)


def _convolve_axis(img, kernel, axis):
    n = img.shape[axis]
    radius = len(kernel) // 2
    base = np.arange(n)
    out = np.zeros_like(img)
    for tap, weight in enumerate(kernel):
        idx = np.clip(base + tap - radius, 0, n - 1)
        out += weight * np.take(img, idx, axis=axis)
    return out


def gaussian_blur(img, sigma) -> np.ndarray:
    """Separable Gaussian blur, radius ceil(3 sigma), clamped edges."""
    img = as_image(img)
    if sigma <= 0:
        raise ParameterError(f"blur sigma must be positive, got {sigma}")
    kernel = gaussian_kernel(sigma)
    out = _convolve_axis(img, kernel, 1)
    out = _convolve_axis(out, kernel, 2)
    return _clamp(out)


def hflip(img) -> np.ndarray:
    return np.ascontiguousarray(as_image(img)[:, :, ::-1])


def apply_composition(img, comp: Composition, rng: RngStream, trace=None) -> np.ndarray:
    """Crop, then apply each op iff a fresh uniform draw falls below its frequency.

    ``trace``, if given, collects the kinds of the ops that fired.
    """
    img = as_image(img)
    out_hw = comp.crop.out_hw or img.shape[1:]
    img = random_crop_resize(img, out_hw, comp.crop.scale, rng)
    for op in comp.ops:
        if not rng.uniform() < op.frequency:
            continue
        if op.kind == JITTER:
            img = color_jitter(img, op.strengths, rng)
        elif op.kind == GRAYSCALE:
            img = grayscale(img)
        elif op.kind == BLUR:
            img = gaussian_blur(img, rng.uniform_range(*op.sigma_range))
        else:
            img = hflip(img)
        if trace is not None:
            trace.append(op.kind)
    return img


def two_views(img, comp: Composition, rng: RngStream):
    """Two independent draws of the same composition, from sub-streams 0 and 1 of ``rng``."""
    return apply_composition(img, comp, rng.spawn(0)), apply_composition(img, comp, rng.spawn(1))
