"""Datasets: MNIST in IDX format and small synthetic sets."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
GZIP_MAGIC = b"\x1f\x8b"

TRAIN_IMAGES = "train-images-idx3-ubyte.gz"
TRAIN_LABELS = "train-labels-idx1-ubyte.gz"


class IDXError(ValueError):
    pass


class IDXMagicError(IDXError):
    pass


class IDXLengthError(IDXError):
    pass


class IDXConsistencyError(IDXError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    K: int

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError(f"inputs must be a non-empty (N, d) array, got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must have one entry per input")
        if self.labels.min() < 0 or self.labels.max() >= self.K:
            raise ValueError(f"labels outside [0, {self.K})")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs contain non-finite values")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def head(self, n: int) -> "Dataset":
        """The first ``n`` samples (all of them when n is 0 or too large)."""
        if n <= 0 or n >= len(self):
            return self
        return Dataset(self.inputs[:n], self.labels[:n], self.K)


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (EOFError, gzip.BadGzipFile) as exc:
            raise IDXLengthError(f"{path}: corrupt or truncated gzip stream ({exc})") from exc
    return raw


def _check_magic(raw: bytes, expected: int, path) -> None:
    if len(raw) < 4:
        raise IDXLengthError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected:
        raise IDXMagicError(f"{path}: magic number {magic} (expected {expected})")


def _parse_images(raw: bytes, path) -> np.ndarray:
    _check_magic(raw, IMAGE_MAGIC, path)
    if len(raw) < 16:
        raise IDXLengthError(f"{path}: image header truncated ({len(raw)} bytes)")
    _, n, rows, cols = struct.unpack(">IIII", raw[:16])
    need = 16 + n * rows * cols
    if len(raw) < need:
        raise IDXLengthError(f"{path}: expected {need} bytes for {n} images, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols)


def _parse_labels(raw: bytes, path) -> np.ndarray:
    _check_magic(raw, LABEL_MAGIC, path)
    if len(raw) < 8:
        raise IDXLengthError(f"{path}: label header truncated ({len(raw)} bytes)")
    _, n = struct.unpack(">II", raw[:8])
    if len(raw) < 8 + n:
        raise IDXLengthError(f"{path}: expected {8 + n} bytes for {n} labels, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8)


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images, shape (N, rows, cols)."""
    return _parse_images(_read_bytes(path), path)


def read_idx_labels(path) -> np.ndarray:
    return _parse_labels(_read_bytes(path), path)


def load_mnist_idx(image_path, label_path, K: int = 10) -> Dataset:
    """Load an IDX image/label pair (plain or gzip) with pixels scaled to [0, 1]."""
    images = read_idx_images(image_path)
    labels = read_idx_labels(label_path)
    if images.shape[0] != labels.shape[0]:
        raise IDXConsistencyError(
            f"{image_path} has {images.shape[0]} images but {label_path} has {labels.shape[0]} labels")
    if labels.size and labels.max() >= K:
        raise IDXConsistencyError(f"{label_path}: label {labels.max()} outside [0, {K})")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), K)


def write_idx(images, labels, image_path, label_path, compress: bool = True) -> None:
    """Write uint8 images (N, rows, cols) and labels (N,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.shape != (images.shape[0],):
        raise ValueError("need images (N, rows, cols) and labels (N,)")
    n, rows, cols = images.shape
    img = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.tobytes()
    lab = struct.pack(">II", LABEL_MAGIC, n) + labels.tobytes()
    for data, path in ((img, image_path), (lab, label_path)):
        if compress:
            # mtime=0 keeps the bytes reproducible
            data = gzip.compress(data, mtime=0)
        Path(path).write_bytes(data)


def default_mnist_dir() -> Path:
    env = os.environ.get("FYLAB_MNIST_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mnist"


def find_mnist(directory=None) -> tuple[Path, Path] | None:
    """Locate the training IDX pair, gzipped or not; None when absent."""
    d = Path(directory) if directory else default_mnist_dir()
    for suffix in ("", ".gz"):
        img = d / TRAIN_IMAGES.replace(".gz", suffix)
        lab = d / TRAIN_LABELS.replace(".gz", suffix)
        if img.exists() and lab.exists():
            return img, lab
    return None


def gaussian_clusters(n_points: int, input_dim: int, K: int, seed: int = 0,
                      separation: float = 10.0, sigma: float = 1.0) -> Dataset:
    """K isotropic Gaussian clusters, one label each, assigned round-robin.

    Cluster means are random directions scaled so that any two means are at
    least ``separation * sigma`` apart.
    """
    if n_points < K:
        raise ValueError("need at least one point per class")
    rng = np.random.default_rng(seed)
    if input_dim >= K:
        means = np.eye(K, input_dim)
    else:
        means = rng.standard_normal((K, input_dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
    gaps = [np.linalg.norm(means[i] - means[j]) for i in range(K) for j in range(i + 1, K)]
    means = means * (separation * sigma / min(gaps))
    labels = np.arange(n_points) % K
    inputs = means[labels] + sigma * rng.standard_normal((n_points, input_dim))
    return Dataset(inputs, labels, K)


def discrete_exact(n_distinct: int, input_dim: int, K: int, seed: int = 0, max_count: int = 4,
                   counts=None) -> tuple[Dataset, np.ndarray]:
    """A dataset over finitely many inputs whose label frequencies are known exactly.

    Each distinct input ``x_i`` appears ``counts[i, y]`` times with label y.
    Returns the dataset and the count table; q(x, y) = counts / counts.sum().
    """
    rng = np.random.default_rng(seed)
    if counts is None:
        counts = rng.integers(0, max_count + 1, size=(n_distinct, K))
        counts[counts.sum(axis=1) == 0, 0] = 1
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape[1] != K or np.any(counts < 0):
        raise ValueError("counts must be a non-negative (n_distinct, K) table")
    n_distinct = counts.shape[0]
    points = rng.standard_normal((n_distinct, input_dim))
    xs, ys = [], []
    for i in range(n_distinct):
        for y in range(K):
            xs.extend([i] * int(counts[i, y]))
            ys.extend([y] * int(counts[i, y]))
    return Dataset(points[np.array(xs)], np.array(ys, dtype=np.int64), K), counts


def empirical_joint(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Distinct inputs and the joint frequency table q(x, y) of a dataset."""
    points, inverse = np.unique(dataset.inputs, axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    joint = np.zeros((points.shape[0], dataset.K))
    np.add.at(joint, (inverse, dataset.labels), 1.0)
    return points, joint / len(dataset)
