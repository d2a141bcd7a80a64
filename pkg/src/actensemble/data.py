"""Dataset loading (MNIST IDX, ISOLET CSV), splitting and minibatching."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
ISOLET_ATTRIBUTES = 617
ISOLET_CLASSES = 26


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray          # [n, d] float64
    labels: np.ndarray            # [n] int64
    class_count: int
    split: str = "train"
    # per-sample layout for conv nets, e.g. (1, 28, 28); None means flat
    sample_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise DataFormatError(
                f"{len(self.features)} feature rows but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataFormatError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx], labels=self.labels[idx],
                       split=split or self.split)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        x = self.features[idx]
        if self.sample_shape is not None:
            x = x.reshape((len(x),) + tuple(self.sample_shape))
        return x, self.labels[idx]


# --- IDX -------------------------------------------------------------------

def _read_idx(path, magic: int, ndims: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndims
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX header")
    got, *dims = struct.unpack(">" + "i" * (1 + ndims), raw[:header])
    if got != magic:
        raise DataFormatError(f"{path}: bad magic {got}, expected {magic}")
    expected = int(np.prod(dims))
    body = raw[header:]
    if len(body) < expected:
        raise DataFormatError(f"{path}: truncated, {len(body)} of {expected} data bytes")
    return np.frombuffer(body, dtype=np.uint8, count=expected).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (3-D -> images magic 2051, 1-D -> labels 2049)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {3: IDX_IMAGES_MAGIC, 1: IDX_LABELS_MAGIC}.get(array.ndim)
    if magic is None:
        raise ValueError("IDX writer supports 1-D labels or 3-D images")
    header = struct.pack(">" + "i" * (1 + array.ndim), magic, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def load_mnist(images_path, labels_path, split: str = "train") -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    n, rows, cols = images.shape
    feats = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(feats, labels.astype(np.int64), 10, split, (1, rows, cols))


def mnist_files(root) -> dict[str, Path]:
    root = Path(root)
    return {
        "train_images": root / "train-images-idx3-ubyte",
        "train_labels": root / "train-labels-idx1-ubyte",
        "test_images": root / "t10k-images-idx3-ubyte",
        "test_labels": root / "t10k-labels-idx1-ubyte",
    }


# --- ISOLET ------------------------------------------------------------------

def load_isolet(csv_path: str | Path | Sequence[str | Path]) -> Dataset:
    """Parse ISOLET rows of 617 reals plus a 1..26 label (raw, unstandardised).

    Several paths (e.g. the UCI ``isolet1+2+3+4.data`` and ``isolet5.data``)
    are concatenated in the order given.
    """
    paths = [csv_path] if isinstance(csv_path, (str, Path)) else list(csv_path)
    feats, labels = [], []
    for path in paths:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != ISOLET_ATTRIBUTES + 1:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected {ISOLET_ATTRIBUTES + 1} fields, got {len(row)}")
                try:
                    vals = [float(c) for c in row]
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{lineno}: {exc}") from None
                lab = vals[-1]
                if lab != int(lab) or not 1 <= lab <= ISOLET_CLASSES:
                    raise DataFormatError(f"{path}:{lineno}: label {row[-1].strip()!r} outside 1..26")
                feats.append(vals[:-1])
                labels.append(int(lab) - 1)
    return Dataset(np.array(feats, dtype=np.float64).reshape(-1, ISOLET_ATTRIBUTES),
                   np.array(labels, dtype=np.int64), ISOLET_CLASSES)


def standardize(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Zero-mean/unit-variance per column using statistics of ``train`` only."""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return [replace(d, features=(d.features - mean) / std) for d in (train, *others)]


# --- splitting and batching -----------------------------------------------

def split_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Round all but the last share to the nearest integer; the last gets the rest."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    sizes = [int(math.floor(n * f + 0.5)) for f in fractions[:-1]]
    sizes.append(n - sum(sizes))
    if any(s <= 0 for s in sizes):
        raise ValueError(f"split of {n} samples by {list(fractions)} leaves an empty part")
    return sizes


def split(dataset: Dataset, fractions: Sequence[float], seed: int,
          tags: Sequence[str] | None = None) -> list[Dataset]:
    sizes = split_sizes(len(dataset), fractions)
    perm = np.random.default_rng(seed).permutation(len(dataset))
    tags = list(tags) if tags is not None else [dataset.split] * len(sizes)
    out, start = [], 0
    for size, tag in zip(sizes, tags):
        out.append(dataset.subset(np.sort(perm[start:start + size]), tag))
        start += size
    return out


class BatchIterator:
    """Shuffled minibatches; the permutation for epoch ``e`` depends only on (seed, e)."""

    def __init__(self, dataset: Dataset, batch_size: int = 128, seed: int = 0,
                 shuffle: bool = True):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.dataset = dataset
        self.batch_size = int(batch_size)
        self.seed = int(seed)
        self.shuffle = shuffle
        self.epoch = 0

    def indices(self, epoch: int) -> Iterator[np.ndarray]:
        n = len(self.dataset)
        order = (np.random.default_rng([self.seed, epoch]).permutation(n)
                 if self.shuffle else np.arange(n))
        for start in range(0, n, self.batch_size):
            yield order[start:start + self.batch_size]

    def __iter__(self):
        epoch = self.epoch
        self.epoch += 1
        for idx in self.indices(epoch):
            yield self.dataset.batch(idx)

    def __len__(self) -> int:
        return math.ceil(len(self.dataset) / self.batch_size)
