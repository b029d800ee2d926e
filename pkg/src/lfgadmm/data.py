"""Dataset ingestion, IID partitioning, synthetic regression and batching."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConsistencyError, FormatError
from .model import MiniBatch

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DATA_DIR_ENV = "LFGADMM_DATA_DIR"

# Standard distribution file names; a ``.gz`` suffix is also accepted.
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ConsistencyError(
                f"{len(self.inputs)} inputs but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index])

    def as_batch(self) -> MiniBatch:
        return MiniBatch(self.inputs, self.labels)


@dataclass(frozen=True)
class PartitionSpec:
    per_worker: int = 500
    batch_size: int = 100
    iid: bool = True

    def __post_init__(self):
        if self.per_worker < 1 or self.batch_size < 1:
            raise ConfigurationError("per_worker and batch_size must be positive")
        if self.batch_size > self.per_worker:
            raise ConfigurationError("batch_size cannot exceed per_worker")
        if not self.iid:
            raise ConfigurationError("only IID partitioning is supported")


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise OSError(f"{path}: truncated or corrupt gzip stream") from exc
    return raw


def _parse_idx(raw: bytes, expected_magic: int, path) -> np.ndarray:
    if len(raw) < 4:
        raise OSError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise OSError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair (plain or gzip-compressed).

    Images are flattened to ``rows*cols`` features and scaled by 1/255.
    """
    images = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels"
        )
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64))


def write_idx(path, array: np.ndarray, compress: bool | None = None) -> None:
    """Write a uint8 array as IDX; 3-d arrays get the image magic, 1-d the label magic."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise FormatError("IDX writer only supports uint8 data")
    magic = {1: LABEL_MAGIC, 3: IMAGE_MAGIC}.get(array.ndim)
    if magic is None:
        raise FormatError("IDX writer expects 1-d labels or 3-d images")
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    payload += np.ascontiguousarray(array).tobytes()
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    if compress:
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mnist"


def load_mnist(data_dir=None, split: str = "train") -> Dataset:
    """Load a split from a directory holding the standard MNIST file names.

    ``data_dir`` defaults to ``$LFGADMM_DATA_DIR`` and then ``data/mnist``
    in the source tree.
    """
    directory = Path(data_dir) if data_dir is not None else default_data_dir()
    images, labels = MNIST_FILES[split]
    return load_idx(_find(directory, images), _find(directory, labels))


def partition_iid(dataset: Dataset, spec: PartitionSpec, n_workers: int, seed: int) -> list[Dataset]:
    """Draw ``n_workers`` disjoint uniform-random subsets of ``spec.per_worker`` samples."""
    need = spec.per_worker * n_workers
    if n_workers < 1 or need > len(dataset):
        raise ConfigurationError(
            f"{n_workers} workers x {spec.per_worker} samples needs {need}, "
            f"dataset has {len(dataset)}"
        )
    perm = np.random.default_rng(seed).permutation(len(dataset))[:need]
    return [dataset.subset(np.sort(chunk)) for chunk in perm.reshape(n_workers, spec.per_worker)]


def synth_regression(n_samples: int, feature_dim: int, noise_std: float,
                     seed: int) -> tuple[Dataset, np.ndarray]:
    """Gaussian design with targets ``X @ w_true + noise``; returns ``w_true`` too."""
    if n_samples < 1 or feature_dim < 1:
        raise ConfigurationError("n_samples and feature_dim must be positive")
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(feature_dim)
    x = rng.standard_normal((n_samples, feature_dim))
    y = x @ w_true + noise_std * rng.standard_normal(n_samples)
    return Dataset(x, y), w_true


def split_even(dataset: Dataset, n_workers: int) -> list[Dataset]:
    """Contiguous equal-size shards, used for the convex mode where order is irrelevant."""
    if len(dataset) % n_workers:
        raise ConfigurationError(f"{len(dataset)} samples do not split evenly over {n_workers} workers")
    size = len(dataset) // n_workers
    return [dataset.subset(slice(i * size, (i + 1) * size)) for i in range(n_workers)]


class BatchSampler:
    """Epoch-wise sampling without replacement, reshuffled every epoch.

    A trailing remainder smaller than ``batch_size`` is dropped.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed):
        if not 1 <= batch_size <= len(dataset):
            raise ConfigurationError(f"batch_size {batch_size} invalid for {len(dataset)} samples")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._order = np.empty(0, dtype=np.intp)
        self._pos = 0

    def next(self) -> MiniBatch:
        if self.batch_size == len(self.dataset):
            return self.dataset.as_batch()
        if self._pos + self.batch_size > len(self._order):
            self._order = self.rng.permutation(len(self.dataset))
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return MiniBatch(self.dataset.inputs[idx], self.dataset.labels[idx])


def make_samplers(datasets, batch_size: int, seed: int, ids=None) -> dict:
    """One independent sampler per worker id, streams spawned from ``seed``."""
    ids = list(range(len(datasets))) if ids is None else list(ids)
    children = np.random.SeedSequence(seed).spawn(max(ids) + 1)
    return {i: BatchSampler(ds, batch_size, children[i]) for i, ds in zip(ids, datasets)}
