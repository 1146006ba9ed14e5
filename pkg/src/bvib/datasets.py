"""Dataset ingestion: IDX binary files and seeded synthetic blobs.

The IDX format: big-endian u32 magic (0x00000803 for image tensors,
0x00000801 for label vectors), big-endian u32 dimension sizes, then the raw
unsigned-byte payload whose length must equal the dimension product exactly.
Images load as (count, rows*cols) scaled to [0, 1]; labels as small ints.

The synthetic generator draws one Gaussian blob per class around distinct
uniform means; it is the desk-scale stand-in when no IDX files are supplied.
"""

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "IdxFormatError",
    "IMAGES_MAGIC",
    "LABELS_MAGIC",
    "Dataset",
    "parse_idx",
    "load_idx_dataset",
    "synth_dataset",
    "train_test_split",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX bytes: bad magic, or payload/header mismatch."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, dim) as float64 plus integer labels (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes: x {x.shape}, y {y.shape}")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self) else 0


def parse_idx(data: bytes) -> np.ndarray:
    """Parse one IDX file: images flatten to (count, rows*cols) uint8,
    labels come back as a (count,) uint8 vector."""
    if len(data) < 4:
        raise IdxFormatError("truncated IDX header: no magic")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IMAGES_MAGIC:
        n_dims = 3
    elif magic == LABELS_MAGIC:
        n_dims = 1
    else:
        raise IdxFormatError(f"unknown IDX magic 0x{magic:08x}")
    header_len = 4 + 4 * n_dims
    if len(data) < header_len:
        raise IdxFormatError("truncated IDX header: missing dimension sizes")
    dims = struct.unpack_from(f">{n_dims}I", data, 4)
    expected = int(np.prod(dims, dtype=np.int64))
    payload = data[header_len:]
    if len(payload) != expected:
        raise IdxFormatError(
            f"payload length {len(payload)} does not match header product {expected}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    if magic == IMAGES_MAGIC:
        return arr.reshape(dims[0], dims[1] * dims[2]).copy()
    return arr.copy()


def load_idx_dataset(images_path, labels_path) -> Dataset:
    """Load an image/label IDX pair; pixels scale to [0, 1]."""
    with open(images_path, "rb") as fh:
        images = parse_idx(fh.read())
    with open(labels_path, "rb") as fh:
        labels = parse_idx(fh.read())
    if images.ndim != 2:
        raise IdxFormatError(f"{images_path} is not an image file")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path} is not a label file")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    return Dataset(x=images.astype(float) / 255.0, y=labels.astype(np.int64))


def synth_dataset(
    classes: int = 10,
    per_class: int = 128,
    dim: int = 784,
    spread: float = 0.25,
    seed: int = 0,
) -> Dataset:
    """Seeded Gaussian blobs with distinct uniform means, shuffled.

    spread is the per-feature standard deviation around each class mean;
    zero collapses every class onto its mean exactly.
    """
    if classes < 2:
        raise ValueError(f"need at least two classes, got {classes}")
    if per_class < 1:
        raise ValueError(f"need at least one sample per class, got {per_class}")
    if spread < 0:
        raise ValueError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 1.0, size=(classes, dim))
    x = np.repeat(means, per_class, axis=0)
    if spread > 0:
        x = x + spread * rng.standard_normal(x.shape)
    y = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    order = rng.permutation(len(y))
    return Dataset(x=x[order], y=y[order])


def train_test_split(dataset: Dataset, n_train: int, n_test: int) -> tuple[Dataset, Dataset]:
    """First ``n_train`` rows train, the next ``n_test`` test."""
    if n_train < 1 or n_test < 1:
        raise ValueError("both splits must be non-empty")
    if n_train + n_test > len(dataset):
        raise ValueError(
            f"split {n_train}+{n_test} exceeds the {len(dataset)} available samples"
        )
    return (
        Dataset(x=dataset.x[:n_train], y=dataset.y[:n_train]),
        Dataset(x=dataset.x[n_train : n_train + n_test], y=dataset.y[n_train : n_train + n_test]),
    )
