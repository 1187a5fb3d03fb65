"""IDX (MNIST container format) reading/writing and the bundled desk dataset."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, InputError, ParseError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Images normalized to [0, 1] as N x C x H x W float64, plus int64 labels."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DimensionError(f"images must be N x C x H x W, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DimensionError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def check(self, input_shape, class_count):
        if self.images.shape[1:] != tuple(input_shape):
            raise DimensionError(f"dataset images are {self.images.shape[1:]}, network expects {tuple(input_shape)}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= class_count):
            raise InputError(f"labels must lie in [0, {class_count})")


def _read_bytes(path) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Decode an unsigned-byte IDX file into a uint8 array of its declared shape."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise ParseError(f"{path}: file too short for an IDX header", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ParseError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"{path}: truncated dimension header", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header + count:
        raise ParseError(f"{path}: truncated payload, {count} bytes declared", len(raw))
    if len(raw) > header + count:
        raise ParseError(f"{path}: {len(raw) - header - count} trailing bytes", header + count)
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise InputError(f"IDX writer supports uint8 payloads only, got {array.dtype}")
    magic = 0x00000800 | array.ndim
    head = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(head + array.tobytes())


def ingest_idx(images_path, labels_path, split: str = "train") -> Dataset:
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if len(images) != len(labels):
        raise ParseError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    return Dataset(images[:, None, :, :].astype(np.float64) / 255.0, labels.astype(np.int64), split)


SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_split(directory, split: str = "test") -> Dataset:
    """Ingest one split from a directory laid out with the standard MNIST
    file names (optionally gzipped)."""
    if split not in SPLIT_FILES:
        raise InputError(f"split must be one of {sorted(SPLIT_FILES)}, got {split!r}")
    directory = Path(directory)
    found = []
    for name in SPLIT_FILES[split]:
        for candidate in (directory / name, directory / f"{name}.gz"):
            if candidate.is_file():
                found.append(candidate)
                break
        else:
            raise ParseError(f"{directory}: no {name} (or {name}.gz) for the {split} split")
    return ingest_idx(found[0], found[1], split)


def make_desk_digits(directory, seed: int = 0, n_test: int = 597, shift: int = 2) -> dict[str, Path]:
    """Write the 1797 scikit-learn 8x8 digits as 28x28 MNIST-format IDX files.

    Each digit is upsampled to 20x20 (bilinear), placed in a 28x28 frame at
    a seeded random offset of up to ``shift`` pixels from center, and
    rescaled to 0..255. Returns the four file paths.
    """
    from scipy.ndimage import zoom
    from sklearn.datasets import load_digits

    digits = load_digits()
    rng = np.random.default_rng(seed)
    n = len(digits.target)
    out = np.zeros((n, 28, 28), dtype=np.uint8)
    for i, img in enumerate(digits.images):
        big = np.clip(zoom(img / 16.0, 2.5, order=1), 0.0, 1.0)
        dy, dx = rng.integers(-shift, shift + 1, size=2)
        top, left = 4 + dy, 4 + dx
        out[i, top : top + 20, left : left + 20] = np.rint(big * 255).astype(np.uint8)
    order = rng.permutation(n)
    test, train = order[:n_test], order[n_test:]
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_images": directory / SPLIT_FILES["train"][0],
        "train_labels": directory / SPLIT_FILES["train"][1],
        "test_images": directory / SPLIT_FILES["test"][0],
        "test_labels": directory / SPLIT_FILES["test"][1],
    }
    labels = digits.target.astype(np.uint8)
    write_idx(paths["train_images"], out[train])
    write_idx(paths["train_labels"], labels[train])
    write_idx(paths["test_images"], out[test])
    write_idx(paths["test_labels"], labels[test])
    return paths
