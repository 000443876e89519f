"""Datasets: procedural multi-scale patterns and IDX image files, with a
Gaussian-blur degraded copy of the test split.

Synthetic images are rendered in float64, clipped to [0, 1] and rounded to
8-bit levels with ``np.rint`` (round half to even) before being returned as
``level / 255``; the uint8 levels are the reproducible byte stream.
"""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError
from .scale_space import scale_space_rep

KINDS = ("synthetic-blobs", "idx-images")
PATTERNS = ("blob", "ridge-h", "ridge-v", "ring", "ridge-d", "cross")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic-blobs"
    classes: int = 4
    train_samples: int = 1024
    test_samples: int = 512
    size: int = 16
    blur: tuple[float, float] | None = None
    seed: int = 0
    inner_scale: tuple[float, float] = (0.6, 2.0)
    noise: float = 0.05
    path: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"dataset kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "synthetic-blobs" and not 2 <= self.classes <= len(PATTERNS):
            raise DomainError(f"synthetic-blobs supports 2..{len(PATTERNS)} classes, got {self.classes}")
        if self.train_samples < 0 or self.test_samples < 0:
            raise DomainError("sample counts must be non-negative")
        if self.size < 8:
            raise DomainError(f"image size must be >= 8, got {self.size}")
        lo, hi = self.inner_scale
        if not 0 < lo <= hi:
            raise DomainError(f"invalid inner-scale range {self.inner_scale}")
        if self.blur is not None:
            lo, hi = self.blur
            if not 0 <= lo <= hi:
                raise DomainError(f"invalid blur range {self.blur}")
        if self.noise < 0:
            raise DomainError("noise must be non-negative")


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    blur_x: np.ndarray | None = None
    blur_t: np.ndarray | None = None

    @property
    def channels(self) -> int:
        return self.train_x.shape[1]

    @property
    def classes(self) -> int:
        return int(max(self.train_y.max(initial=-1), self.test_y.max(initial=-1))) + 1


def _render(kind: str, size: int, cy: float, cx: float, s: float, contrast: float) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = y - cy, x - cx
    if kind == "blob":
        img = np.exp(-(dy ** 2 + dx ** 2) / (2 * (1.5 * s) ** 2))
    elif kind == "ridge-h":
        img = np.exp(-dy ** 2 / (2 * s ** 2))
    elif kind == "ridge-v":
        img = np.exp(-dx ** 2 / (2 * s ** 2))
    elif kind == "ridge-d":
        img = np.exp(-((dx - dy) / math.sqrt(2)) ** 2 / (2 * s ** 2))
    elif kind == "ring":
        r = np.sqrt(dy ** 2 + dx ** 2)
        img = np.exp(-(r - 2.0 - 2.0 * s) ** 2 / (2 * s ** 2))
    elif kind == "cross":
        img = np.maximum(np.exp(-dy ** 2 / (2 * s ** 2)), np.exp(-dx ** 2 / (2 * s ** 2)))
    else:
        raise DomainError(f"unknown pattern {kind!r}")
    return contrast * img


def quantize(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _synth_split(rng: np.random.Generator, spec: DatasetSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(n) % spec.classes
    rng.shuffle(labels)
    levels = np.empty((n, 1, spec.size, spec.size), dtype=np.uint8)
    jitter = spec.size / 8.0
    for i, label in enumerate(labels):
        cy, cx = spec.size / 2.0 - 0.5 + rng.uniform(-jitter, jitter, size=2)
        s = rng.uniform(*spec.inner_scale)
        contrast = rng.uniform(0.6, 1.0)
        img = _render(PATTERNS[label], spec.size, cy, cx, s, contrast)
        img += spec.noise * rng.standard_normal(img.shape)
        levels[i, 0] = quantize(img)
    return levels, labels.astype(np.int64)


def synth_levels(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """uint8 train/test images and labels; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    train = _synth_split(rng, spec, spec.train_samples)
    test = _synth_split(rng, spec, spec.test_samples)
    return train[0], train[1], test[0], test[1]


def blur_split(images: np.ndarray, spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Blur every image with its own ``t_blur`` drawn uniformly from ``spec.blur``."""
    if spec.blur is None:
        raise DomainError("spec has no blur range")
    rng = np.random.default_rng([spec.seed, 0xB1])
    ts = rng.uniform(*spec.blur, size=len(images)) if spec.blur[1] > spec.blur[0] \
        else np.full(len(images), spec.blur[0])
    out = np.empty_like(images)
    for i, t in enumerate(ts):
        out[i:i + 1] = scale_space_rep(images[i:i + 1], float(t))
    return out, ts


def synth_dataset(spec: DatasetSpec) -> Dataset:
    if spec.kind == "idx-images":
        train_x, train_y, test_x, test_y = load_idx_dataset(spec)
    else:
        a, b, c, d = synth_levels(spec)
        train_x, train_y, test_x, test_y = a / 255.0, b, c / 255.0, d
    data = Dataset(train_x, train_y, test_x, test_y)
    if spec.blur is not None:
        data.blur_x, data.blur_t = blur_split(test_x, spec)
    return data


def high_band_energy(images: np.ndarray, border: int = 0) -> float:
    """Spectral energy at spatial frequencies above half Nyquist (max-norm), summed over images.

    ``border`` pixels are trimmed from each side first.
    """
    imgs = np.asarray(images, dtype=np.float64)
    if border:
        imgs = imgs[..., border:-border, border:-border]
    spec = np.abs(np.fft.fft2(imgs)) ** 2
    fy = np.abs(np.fft.fftfreq(imgs.shape[-2]))[:, None]
    fx = np.abs(np.fft.fftfreq(imgs.shape[-1]))[None, :]
    mask = np.maximum(fy, fx) > 0.25
    return float(spec[..., mask].sum())


# IDX (MNIST-style) files -------------------------------------------------

_IDX_TYPES = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = gzip.decompress(path.read_bytes()) if path.suffix == ".gz" else path.read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise FormatError(f"{path}: not an IDX file")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = np.dtype(_IDX_TYPES[raw[2]])
    count = int(np.prod(dims)) if dims else 1
    if len(raw) - header != count * dtype.itemsize:
        raise FormatError(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem + ".idx"):
        if (root / name).exists():
            return root / name
    raise FormatError(f"{root}: no file for {stem}")


def load_idx_dataset(spec: DatasetSpec):
    """Reads ``{train,t10k}-{images-idx3,labels-idx1}-ubyte`` from ``spec.path``."""
    root = Path(spec.path)
    out = []
    for split, n in (("train", spec.train_samples), ("t10k", spec.test_samples)):
        images = read_idx(_find(root, f"{split}-images-idx3-ubyte"))
        labels = read_idx(_find(root, f"{split}-labels-idx1-ubyte")).astype(np.int64)
        if len(images) != len(labels):
            raise FormatError(f"{split}: {len(images)} images but {len(labels)} labels")
        if n:
            images, labels = images[:n], labels[:n]
        out += [images[:, None].astype(np.float64) / 255.0, labels]
    return tuple(out)
