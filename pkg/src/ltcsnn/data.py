"""Dataset readers, synthetic generators, deterministic splits and downsampling."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IdxFormatError

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049
_MAX_ELEMENTS = 2**31  # sanity cap on the product of the header dimensions

DATA_DIR_ENV = "LTC_DATA_DIR"
MNIST_FILES = {
    "train_images": "train-images.idx3-ubyte",
    "train_labels": "train-labels.idx1-ubyte",
    "test_images": "t10k-images.idx3-ubyte",
    "test_labels": "t10k-labels.idx1-ubyte",
}


def parse_idx(buf: bytes, scale: bool = True) -> np.ndarray:
    """Decode an unsigned-byte IDX buffer. Image files come back as float64
    in [0, 1], label files as int64."""
    if len(buf) < 4:
        raise IdxFormatError("file too short for an IDX header")
    magic = struct.unpack(">I", buf[:4])[0]
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise IdxFormatError(f"bad IDX magic {magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxFormatError("truncated IDX header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > _MAX_ELEMENTS:
            raise IdxFormatError(f"IDX dimensions {dims} overflow")
    if len(buf) - header < count:
        raise IdxFormatError(f"truncated IDX payload: need {count} bytes, have {len(buf) - header}")
    data = np.frombuffer(buf, dtype=np.uint8, count=count, offset=header).reshape(dims)
    if magic == IMAGES_MAGIC:
        return data.astype(np.float64) / 255.0 if scale else data.copy()
    return data.astype(np.int64)


def load_idx(path, scale: bool = True) -> np.ndarray:
    return parse_idx(Path(path).read_bytes(), scale=scale)


def encode_idx(array) -> bytes:
    """Inverse of :func:`parse_idx` for uint8 payloads (1-d arrays become label files)."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        if np.any(a < 0) or np.any(a > 255) or np.any(a != np.round(a)):
            raise IdxFormatError("IDX payload must be unsigned bytes")
        a = a.astype(np.uint8)
    magic = LABELS_MAGIC if a.ndim == 1 else IMAGES_MAGIC
    if a.ndim != (magic & 0xFF):
        raise IdxFormatError(f"{a.ndim}-d array does not fit an IDX label/image file")
    return struct.pack(f">I{a.ndim}I", magic, *a.shape) + np.ascontiguousarray(a).tobytes()


def write_idx(path, array):
    Path(path).write_bytes(encode_idx(array))


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("images and labels differ in length")

    def __len__(self):
        return len(self.x)

    def subset(self, idx):
        return Dataset(self.x[idx], self.y[idx])


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    for cand in (Path("data/mnist"), Path.home() / "data" / "mnist", Path("/root/data/mnist")):
        if (cand / MNIST_FILES["train_images"]).exists():
            return cand
    return Path("data/mnist")


def _find(data_dir: Path, name: str) -> Path:
    for cand in (name, name.replace(".idx", "-idx"), name + ".gz"):
        p = data_dir / cand
        if p.exists():
            return p
    raise FileNotFoundError(f"{name} not found in {data_dir}")


def _read(path: Path):
    if path.suffix == ".gz":
        import gzip
        return parse_idx(gzip.decompress(path.read_bytes()))
    return load_idx(path)


def load_mnist(data_dir=None):
    """Return ``(train, test)`` datasets with images shaped (N, 1, 28, 28)."""
    d = Path(data_dir) if data_dir else default_data_dir()
    parts = {k: _read(_find(d, v)) for k, v in MNIST_FILES.items()}
    train = Dataset(parts["train_images"][:, None], parts["train_labels"])
    test = Dataset(parts["test_images"][:, None], parts["test_labels"])
    return train, test


def split(dataset, seed: int, sizes):
    """Seeded shuffle then consecutive partitions of the given sizes.

    ``dataset`` may be a :class:`Dataset`, an array, or an integer length, in
    which case index arrays are returned.
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes) or sum(sizes) > n:
        raise ValueError(f"split sizes {sizes} exceed dataset size {n}")
    perm = np.random.default_rng(seed).permutation(n)
    out, start = [], 0
    for s in sizes:
        idx = perm[start:start + s]
        start += s
        if isinstance(dataset, (int, np.integer)):
            out.append(idx)
        elif isinstance(dataset, Dataset):
            out.append(dataset.subset(idx))
        else:
            out.append(np.asarray(dataset)[idx])
    return tuple(out)


def downsample(images, factor: int) -> np.ndarray:
    """Block-average the last two axes by ``factor``."""
    x = np.asarray(images, dtype=np.float64)
    factor = int(factor)
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    h, w = x.shape[-2:]
    if h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide {h}x{w}")
    if factor == 1:
        return x.copy()
    shaped = x.reshape(x.shape[:-2] + (h // factor, factor, w // factor, factor))
    return shaped.mean(axis=(-3, -1))


# -- synthetic data ---------------------------------------------------------

def make_blobs(n: int, n_classes: int = 3, dim: int = 2, spread: float = 0.08, seed: int = 0) -> Dataset:
    """Gaussian clusters with centers in [0.2, 0.8]^dim, clipped to [0, 1]."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, (n_classes, dim))
    y = rng.integers(0, n_classes, n)
    x = np.clip(centers[y] + rng.normal(0, spread, (n, dim)), 0.0, 1.0)
    return Dataset(x, y)


def make_moons(n: int, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Two interleaved half circles rescaled into [0, 1]^2."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    theta = rng.uniform(0, np.pi, n)
    x0 = np.where(y == 0, np.cos(theta), 1 - np.cos(theta))
    x1 = np.where(y == 0, np.sin(theta), 0.5 - np.sin(theta))
    x = np.stack([x0, x1], axis=1) + rng.normal(0, noise, (n, 2))
    x = (x - np.array([-1.2, -0.7])) / np.array([3.4, 2.4])
    return Dataset(np.clip(x, 0.0, 1.0), y)


def load_dataset(name: str, *, data_dir=None, seed: int = 0, n_synthetic: int = 2000):
    """``(train, test)`` for ``mnist``, ``blobs`` or ``moons``."""
    if name == "mnist":
        return load_mnist(data_dir)
    if name == "blobs":
        # bias-free networks separate classes by direction only; 4-d centers keep the angles apart
        full = make_blobs(n_synthetic, dim=4, seed=seed)
    elif name == "moons":
        full = make_moons(n_synthetic, seed=seed)
    else:
        raise ConfigError(f"unknown dataset {name!r}")
    n_test = len(full) // 5
    test, train = split(full, seed, (n_test, len(full) - n_test))
    return train, test
