"""Synthetic labeled images and the ``ADDS`` binary dataset format.

File layout (all integers little-endian)::

    b"ADDS" | u32 version=1 | u32 count | u32 C | u32 H | u32 W | u32 num_classes
    count x ( u32 label | C*H*W float32 pixels, CHW order )
"""

from __future__ import annotations

import colorsys
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import AugOpSpec, BLUR, Composition, CropSpec, FLIP, GRAYSCALE, JITTER
from .errors import FormatError, ParameterError
from .numerics import RngStream

MAGIC = b"ADDS"
VERSION = 1
_HEADER = struct.Struct("<4s6I")


@dataclass
class Dataset:
    images: np.ndarray  # (M, C, H, W) float32
    labels: np.ndarray  # (M,) int64
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) == 0:
            raise ParameterError(f"dataset needs a non-empty (M, C, H, W) image array, got {self.images.shape}")
        if self.labels.shape != (len(self.images),):
            raise ParameterError(f"{len(self.labels)} labels for {len(self.images)} images")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ParameterError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.images)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
            and self.images.shape == other.images.shape
            and self.images.tobytes() == other.images.tobytes()
        )

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)


def _class_style(c, num_classes):
    """Stripe orientation, spatial frequency and two-color palette for class ``c``."""
    angle = np.pi * (c + 0.25) / num_classes
    freq = 1.5 + (c % 3) * 0.75  # cycles across the image
    hue = c / num_classes
    fg = np.array(colorsys.hsv_to_rgb(hue, 0.85, 0.95))
    bg = np.array(colorsys.hsv_to_rgb((hue + 0.15) % 1.0, 0.6, 0.25))
    return angle, freq, fg, bg


def render_sample(c, num_classes, hw, rng: RngStream, noise=0.05):
    h, w = hw
    angle, freq, fg, bg = _class_style(c, num_classes)
    angle += rng.uniform_range(-0.15, 0.15)
    phase = rng.uniform_range(0.0, 2.0 * np.pi)
    contrast = rng.uniform_range(0.7, 1.0)
    yy, xx = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    wave = np.sin(2.0 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
    mix = 0.5 + 0.5 * contrast * wave
    img = bg[:, None, None] + (fg - bg)[:, None, None] * mix[None]
    img = img + noise * rng.normal_array(3 * h * w).reshape(3, h, w)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_synthetic(num_classes=4, per_class=500, hw=(16, 16), seed=0) -> Dataset:
    """Class-conditional oriented stripes with a per-class palette plus pixel noise.

    Samples are interleaved by class; sample i draws from its own stream, so the
    result depends only on the arguments.
    """
    if num_classes < 2:
        raise ParameterError(f"need at least 2 classes, got {num_classes}")
    if per_class < 1:
        raise ParameterError(f"per_class must be positive, got {per_class}")
    root = RngStream(seed, 0).spawn("data")
    count = num_classes * per_class
    labels = np.arange(count) % num_classes
    images = np.stack([render_sample(int(labels[i]), num_classes, hw, root.spawn(i)) for i in range(count)])
    return Dataset(images, labels, num_classes)


def easy_compositions(hw=None):
    """Composition 0 never augments and crops full-frame; 1 and 2 are standard-strength."""
    trivial = Composition(
        0,
        CropSpec((1.0, 1.0), hw),
        (AugOpSpec(JITTER, 0.0), AugOpSpec(GRAYSCALE, 0.0), AugOpSpec(BLUR, 0.0), AugOpSpec(FLIP, 0.0)),
    )
    return [
        trivial,
        Composition.standard(1, jitter=0.8, out_hw=hw),
        Composition.standard(2, jitter=0.6, out_hw=hw),
    ]


def easy_scenario(num_classes=4, per_class=500, hw=(16, 16), seed=0):
    return generate_synthetic(num_classes, per_class, hw, seed), easy_compositions()


def dumps_dataset(ds: Dataset) -> bytes:
    c, h, w = ds.image_shape
    parts = [_HEADER.pack(MAGIC, VERSION, len(ds), c, h, w, ds.num_classes)]
    pixels = ds.images.astype("<f4").reshape(len(ds), -1)
    for label, row in zip(ds.labels, pixels):
        parts.append(struct.pack("<I", int(label)))
        parts.append(row.tobytes())
    return b"".join(parts)


def loads_dataset(raw: bytes) -> Dataset:
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise FormatError("bad magic, not an ADDS dataset file", offset=0)
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header", offset=len(raw))
    _, version, count, c, h, w, num_classes = _HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if count == 0 or min(c, h, w) == 0:
        raise FormatError("empty dataset", offset=8)
    pixels = c * h * w
    record = 4 + 4 * pixels
    expected = _HEADER.size + count * record
    if len(raw) < expected:
        bad = _HEADER.size + ((len(raw) - _HEADER.size) // record) * record
        raise FormatError(f"truncated record {(bad - _HEADER.size) // record} of {count}", offset=bad)
    if len(raw) > expected:
        raise FormatError("trailing bytes after last record", offset=expected)
    body = np.frombuffer(raw, dtype=np.uint8, count=count * record, offset=_HEADER.size).reshape(count, record)
    labels = body[:, :4].copy().view("<u4")[:, 0].astype(np.int64)
    images = body[:, 4:].copy().view("<f4").reshape(count, c, h, w).astype(np.float32)
    bad = np.nonzero(labels >= num_classes)[0]
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} >= num_classes {num_classes}", offset=_HEADER.size + int(bad[0]) * record)
    return Dataset(images, labels, num_classes)


def save_dataset(ds: Dataset, path):
    Path(path).write_bytes(dumps_dataset(ds))


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_bytes())
