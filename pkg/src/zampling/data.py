"""MNIST IDX loading and a synthetic Gaussian-blob stand-in."""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError, EmptyDatasetError, MagicMismatchError, MissingFileError,
    TruncatedPayloadError,
)
from .rng import as_seed

DATA_DIR_ENV = "ZAMPLE_DATA_DIR"
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
MNIST_SIZES = {"train": 60000, "test": 10000}


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.labels) < 1:
            raise EmptyDatasetError("batch must hold at least one sample")
        if len(self.inputs) != len(self.labels):
            raise DataError("inputs and labels differ in length")


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __len__(self):
        return len(self.labels)

    @property
    def inputs(self) -> np.ndarray:
        return self.images

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.labels[idx], split or self.split)

    def batch(self, idx=None) -> Batch:
        if idx is None:
            return Batch(self.images, self.labels)
        return Batch(self.images[idx], self.labels[idx])


def _read_bytes(path: Path) -> bytes:
    if path.exists():
        return path.read_bytes()
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gzip.decompress(gz.read_bytes())
    raise MissingFileError(f"missing MNIST file {path}")


def read_idx(path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{path}: shorter than the IDX magic")
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise MagicMismatchError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedPayloadError(f"{path}: truncated header")
    dims = [int.from_bytes(raw[4 + 4 * k: 8 + 4 * k], "big") for k in range(ndim)]
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise TruncatedPayloadError(f"{path}: expected {count} payload bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def resolve_data_dir(path=None) -> Path:
    path = path or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise MissingFileError(f"no data directory given; pass --data-dir or set {DATA_DIR_ENV}")
    return Path(path)


def load_split(directory, split: str) -> Dataset:
    img_name, lab_name = MNIST_FILES[split]
    images = read_idx(Path(directory) / img_name, IMAGES_MAGIC)
    labels = read_idx(Path(directory) / lab_name, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{split}: {images.shape[0]} images but {labels.shape[0]} labels")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64), split)


def load_mnist(directory=None) -> tuple[Dataset, Dataset]:
    directory = resolve_data_dir(directory)
    return load_split(directory, "train"), load_split(directory, "test")


def synthetic_blobs(n_per_class: int, classes: int, dim: int, separation: float,
                    seed, split: str = "train") -> Dataset:
    """Isotropic unit-variance Gaussian blobs.

    Class means sit on mutually orthogonal random directions, scaled so any
    two means are ``separation`` standard deviations apart.
    """
    if n_per_class < 1 or classes < 1 or dim < 1 or separation < 0:
        raise ValueError("blob parameters must be positive")
    if classes > dim:
        raise ValueError("need dim >= classes for orthogonal class means")
    rng = as_seed(seed).stream("blobs", 0 if split == "train" else 1)
    basis, _ = np.linalg.qr(as_seed(seed).stream("blobs-means").standard_normal((dim, classes)))
    means = basis.T * (separation / np.sqrt(2.0))
    labels = np.repeat(np.arange(classes), n_per_class)
    images = means[labels] + rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)
    return Dataset(images[order], labels[order].astype(np.int64), split)
