"""Dataset loading: IDX files (MNIST / FashionMNIST) and a synthetic generator."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError, InputError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    ids: list[str]

    def __post_init__(self):
        n = len(self.images)
        if len(self.labels) != n or len(self.ids) != n:
            raise InputError(f"dataset fields disagree in length: {n} images, "
                             f"{len(self.labels)} labels, {len(self.ids)} ids")

    def __len__(self):
        return len(self.labels)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], [self.ids[i] for i in index])


def _read_bytes(path) -> bytes:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header, expected {header} bytes, got {len(raw)}")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = header + int(np.prod(dims))
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "oversized"
        raise FormatError(f"{path}: {kind} file, expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, role: str | None = None) -> Dataset:
    """Load an IDX image/label file pair, scaling pixels to [0, 1].

    ``role`` ("train" or "test") prefixes the generated ids; by default it is
    inferred from the image file name (``t10k``/``test`` means test).
    """
    pixels = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1, labels_path)
    if len(pixels) != len(labels):
        raise FormatError(f"{images_path} holds {len(pixels)} images but {labels_path} holds {len(labels)} labels")
    if role is None:
        name = os.path.basename(os.fspath(images_path))
        role = "test" if name.startswith(("t10k", "test")) else "train"
    images = pixels.astype(np.float64) / 255.0
    ids = [f"{role}-{i:06d}" for i in range(len(labels))]
    return Dataset(images, labels.astype(np.int64), ids)


def _locate(data_dir, filename):
    for candidate in (filename, filename + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise ConfigurationError(f"missing {filename}[.gz] in data directory {data_dir!r}")


def load_split(data_dir, split: str) -> Dataset:
    """Load the standard ``train`` or ``test`` split from a directory of IDX files."""
    img, lab = IDX_FILES[split]
    return load_idx(_locate(data_dir, img), _locate(data_dir, lab), role=split)


def synth_dataset(seed: int, n: int, classes: int = 10, H: int = 28, W: int = 28,
                  noise: float = 0.15, role: str = "synth") -> Dataset:
    """Class-conditioned blob images a small conv net can separate.

    Each class owns one blob centre on a coarse grid; every sample is that
    blob plus Gaussian pixel noise, clipped to [0, 1]. Labels are balanced.
    """
    if not n >= classes >= 2:
        raise InputError(f"need n >= classes >= 2, got n={n}, classes={classes}")
    rng = np.random.default_rng(seed)
    side = int(np.ceil(np.sqrt(classes)))
    cells = rng.permutation(side * side)[:classes]
    cy = (cells // side + 0.5) * H / side
    cx = (cells % side + 0.5) * W / side
    width = max(H, W) / (2.5 * side)
    yy, xx = np.mgrid[0:H, 0:W]
    blobs = np.exp(-((yy[None] - cy[:, None, None]) ** 2 + (xx[None] - cx[:, None, None]) ** 2) / (2 * width ** 2))
    labels = rng.permutation(np.arange(n) % classes)
    images = np.clip(blobs[labels] + rng.normal(0.0, noise, size=(n, H, W)), 0.0, 1.0)
    return Dataset(images, labels.astype(np.int64), [f"{role}-{i:06d}" for i in range(n)])
