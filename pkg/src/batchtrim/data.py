"""Datasets: synthetic blob generator, IDX and CIFAR-10 binary parsers,
train-statistics normalization, and deterministic shuffled batching.

Container formats accepted here:
  * IDX (MNIST): big-endian headers; images magic 0x00000803 then dims
    N, 28, 28; labels magic 0x00000801 then dim N.  Raw bytes only,
    decompression is the caller's problem.
  * CIFAR-10 binary: records of exactly 3073 bytes, 1 label byte then
    3072 pixel bytes (R plane, G plane, B plane, each row-major 32x32).

Pixels are scaled from [0, 255] to [0, 1] on load; `standardize` then
applies train-split statistics to both splits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataConsistencyError,
    DataFormatError,
    DataLengthError,
    LabelError,
    ParameterError,
    ShapeError,
)
from .rng import Prng, derive_seed, permutation
from .tensor import Tensor

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801
_CIFAR_RECORD = 3073


@dataclass
class Dataset:
    """Immutable-after-load sample store; shared read-only across trials."""

    inputs: Tensor
    labels: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DataConsistencyError(
                f"{self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels")
        if self.class_count < 1:
            raise ParameterError(f"class_count must be >= 1, got {self.class_count}")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise LabelError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def synth_blobs(prng: Prng, n: int, dim: int, classes: int, cluster_std: float,
                label_flip_prob: float = 0.0, split: str = "train") -> Dataset:
    """Gaussian class blobs with optional uniform label reassignment.

    Class centers are drawn once ~ Normal(0, I); sample i belongs to class
    i % classes and sits at center + Normal(0, cluster_std * I).  With
    probability label_flip_prob a label is replaced by a uniform class draw
    (possibly the same class), which plants genuinely hard samples.

    Draw order is fixed: centers, sample noise, flip coins, flip targets --
    so a seed pins the whole dataset.
    """
    if classes < 1 or n < classes:
        raise ParameterError(f"need n >= classes >= 1, got n={n}, classes={classes}")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if cluster_std <= 0:
        raise ParameterError(f"cluster_std must be > 0, got {cluster_std}")
    if not 0.0 <= label_flip_prob < 1.0:
        raise ParameterError(f"label_flip_prob must be in [0, 1), got {label_flip_prob}")

    centers = prng.normals(classes * dim).reshape(classes, dim)
    base = np.arange(n, dtype=np.int64) % classes
    noise = prng.normals(n * dim).reshape(n, dim)
    inputs = centers[base] + cluster_std * noise
    coins = prng.uniforms(n)
    targets = np.floor(prng.uniforms(n) * classes).astype(np.int64)
    labels = np.where(coins < label_flip_prob, targets, base)
    return Dataset(Tensor(inputs), labels, classes, split)


def split_dataset(ds: Dataset, n_train: int) -> tuple[Dataset, Dataset]:
    """First n_train rows become the train split, the rest the test split."""
    n = len(ds)
    if not 1 <= n_train < n:
        raise ParameterError(f"n_train must be in [1, {n}), got {n_train}")
    train = Dataset(Tensor(ds.inputs.array[:n_train].copy()), ds.labels[:n_train].copy(),
                    ds.class_count, "train")
    test = Dataset(Tensor(ds.inputs.array[n_train:].copy()), ds.labels[n_train:].copy(),
                   ds.class_count, "test")
    return train, test


def load_idx(images: bytes, labels: bytes, split: str = "train") -> Dataset:
    """Parse IDX image/label byte payloads into a [N, 1, 28, 28] dataset."""
    if len(images) < 16:
        raise DataLengthError(f"image header needs 16 bytes, got {len(images)}")
    magic, count, rows, cols = struct.unpack(">IIII", images[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad image magic 0x{magic:08x}")
    if rows != 28 or cols != 28:
        raise DataFormatError(f"expected 28x28 images, header says {rows}x{cols}")
    if count < 1:
        raise DataLengthError("image header declares zero images")
    if len(images) - 16 != count * 784:
        raise DataLengthError(
            f"image payload holds {len(images) - 16} bytes, header needs {count * 784}")

    if len(labels) < 8:
        raise DataLengthError(f"label header needs 8 bytes, got {len(labels)}")
    lmagic, lcount = struct.unpack(">II", labels[:8])
    if lmagic != _IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad label magic 0x{lmagic:08x}")
    if len(labels) - 8 != lcount:
        raise DataLengthError(
            f"label payload holds {len(labels) - 8} bytes, header needs {lcount}")
    if lcount != count:
        raise DataConsistencyError(f"{count} images but {lcount} labels")

    y = np.frombuffer(labels, dtype=np.uint8, offset=8)
    if y.max(initial=0) > 9:
        raise DataFormatError(f"label byte {y.max()} exceeds 9")
    pixels = np.frombuffer(images, dtype=np.uint8, offset=16).astype(np.float64) / 255.0
    return Dataset(Tensor(pixels.reshape(count, 1, 28, 28)), y.astype(np.int64), 10, split)


def load_cifar10_bin(data: bytes, split: str = "train") -> Dataset:
    """Parse CIFAR-10 binary records into a [N, 3, 32, 32] dataset."""
    if len(data) == 0 or len(data) % _CIFAR_RECORD != 0:
        raise DataLengthError(
            f"payload of {len(data)} bytes is not a positive multiple of {_CIFAR_RECORD}")
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
    y = records[:, 0]
    if y.max() > 9:
        raise DataFormatError(f"label byte {y.max()} exceeds 9")
    pixels = records[:, 1:].astype(np.float64) / 255.0
    n = records.shape[0]
    return Dataset(Tensor(pixels.reshape(n, 3, 32, 32)), y.astype(np.int64), 10, split)


def to_cifar10_bin(ds: Dataset) -> bytes:
    """Serialize a [N, 3, 32, 32] dataset back to CIFAR-10 binary records.

    Pixels are rounded to the nearest 1/255 step; datasets produced by
    load_cifar10_bin round-trip bit-exactly.
    """
    if ds.inputs.shape[1:] != (3, 32, 32):
        raise ShapeError(f"need [N, 3, 32, 32] inputs, got {ds.inputs.shape}")
    n = len(ds)
    pixels = np.clip(np.rint(ds.inputs.array * 255.0), 0, 255).astype(np.uint8)
    records = np.empty((n, _CIFAR_RECORD), dtype=np.uint8)
    records[:, 0] = ds.labels.astype(np.uint8)
    records[:, 1:] = pixels.reshape(n, 3072)
    return records.tobytes()


def to_idx(ds: Dataset) -> tuple[bytes, bytes]:
    """Serialize a [N, 1, 28, 28] dataset back to IDX image/label payloads.

    Inverse of load_idx up to the 1/255 pixel grid, so loaded datasets
    round-trip bit-exactly.
    """
    if ds.inputs.shape[1:] != (1, 28, 28):
        raise ShapeError(f"need [N, 1, 28, 28] inputs, got {ds.inputs.shape}")
    n = len(ds)
    pixels = np.clip(np.rint(ds.inputs.array * 255.0), 0, 255).astype(np.uint8)
    images = struct.pack(">IIII", _IDX_IMAGES_MAGIC, n, 28, 28) + pixels.tobytes()
    labels = struct.pack(">II", _IDX_LABELS_MAGIC, n) + ds.labels.astype(np.uint8).tobytes()
    return images, labels


@dataclass(frozen=True)
class Standardization:
    """Per-channel statistics, always computed from the train split."""

    mean: np.ndarray
    std: np.ndarray


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, Standardization]:
    """Shift/scale both splits by train-split per-channel mean and std.

    "Channel" means axis 1: feature columns for [N, d] data, image channels
    for [N, C, H, W] data.  Std is floored at 1e-6 so constant channels map
    to zero instead of dividing by zero.
    """
    if train.inputs.shape[1:] != test.inputs.shape[1:]:
        raise ShapeError(
            f"train features {train.inputs.shape[1:]} vs test {test.inputs.shape[1:]}")
    axes = (0,) if train.inputs.array.ndim == 2 else (0, 2, 3)
    mean = train.inputs.array.mean(axis=axes, keepdims=True)
    std = np.maximum(train.inputs.array.std(axis=axes, keepdims=True), 1e-6)

    def apply(ds: Dataset) -> Dataset:
        return Dataset(Tensor((ds.inputs.array - mean) / std), ds.labels.copy(),
                       ds.class_count, ds.split)

    return apply(train), apply(test), Standardization(mean=mean.squeeze(), std=std.squeeze())


def batches(dataset: Dataset, batch_size: int, run_seed: int, epoch: int) -> list[np.ndarray]:
    """Index slices covering one shuffled epoch; final partial batch kept.

    The permutation is seeded by (run_seed, epoch) alone, so any epoch is
    reproducible in isolation without replaying earlier ones.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    perm = permutation(Prng(derive_seed(run_seed, epoch)), n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]
