"""
BNND dataset files and synthetic datasets.

BNND layout (little-endian):
    magic b"BNND", u8 version (1), u32 N, u16 H, u16 W, u8 C, u8 num_classes,
    then N records of H*W*C pixel bytes followed by one label byte.

Pixels are stored as raw u8 and scaled to [-1, 1] by ``Dataset.features``.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"BNND"
VERSION = 1
_HEADER = struct.Struct("<4sBIHHBB")


class DatasetFormatError(ValueError):
    """Raised when a BNND payload is malformed; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable labeled image set; pixels have shape (N, H, W, C)."""
    pixels: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if self.pixels.ndim != 4:
            raise ValueError(f"pixels must be (N, H, W, C), got shape {self.pixels.shape}")
        if self.labels.shape != (self.pixels.shape[0],):
            raise ValueError("labels must hold one entry per sample")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ValueError(f"label {int(self.labels.max())} >= num_classes {self.num_classes}")
        pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        pixels.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(int(s) for s in self.pixels.shape[1:])

    @property
    def features(self) -> np.ndarray:
        """Pixels scaled to [-1, 1] as float64, shape (N, H, W, C)."""
        return self.pixels.astype(np.float64) / 127.5 - 1.0

    @property
    def chance_accuracy(self) -> float:
        return 1.0 / self.num_classes

    def subset(self, indices: np.ndarray, split: str) -> "Dataset":
        return Dataset(self.pixels[indices], self.labels[indices], self.num_classes, split)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and np.array_equal(self.pixels, other.pixels)
                and np.array_equal(self.labels, other.labels))


def to_bytes(dataset: Dataset) -> bytes:
    n = len(dataset)
    h, w, c = dataset.shape
    header = _HEADER.pack(MAGIC, VERSION, n, h, w, c, dataset.num_classes)
    records = np.concatenate(
        [dataset.pixels.reshape(n, h * w * c), dataset.labels.reshape(n, 1)], axis=1
    )
    return header + records.tobytes()


def from_bytes(payload: bytes, split: str = "train") -> Dataset:
    if len(payload) < _HEADER.size:
        raise DatasetFormatError("truncated header", len(payload))
    magic, version, n, h, w, c, num_classes = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 4)
    record = h * w * c + 1
    expected = _HEADER.size + n * record
    if len(payload) < expected:
        # first byte of the record that cannot be completed
        complete = (len(payload) - _HEADER.size) // record
        raise DatasetFormatError(
            f"truncated payload: {complete} of {n} records present", _HEADER.size + complete * record
        )
    if len(payload) > expected:
        raise DatasetFormatError(f"{len(payload) - expected} trailing bytes", expected)

    body = np.frombuffer(payload, dtype=np.uint8, count=n * record, offset=_HEADER.size)
    body = body.reshape(n, record)
    labels = body[:, -1]
    bad = np.nonzero(labels >= num_classes)[0]
    if bad.size:
        i = int(bad[0])
        raise DatasetFormatError(
            f"label {int(labels[i])} >= num_classes {num_classes} in record {i}",
            _HEADER.size + i * record + record - 1,
        )
    pixels = body[:, :-1].reshape(n, h, w, c)
    return Dataset(pixels.copy(), labels.copy(), num_classes, split)


def load(path: Union[str, Path], split: str = "train") -> Dataset:
    """Parse a BNND file."""
    payload = Path(path).read_bytes()
    dataset = from_bytes(payload, split)
    logger.info(f"Loaded {len(dataset)} samples of shape {dataset.shape} from {path}")
    return dataset


def save(dataset: Dataset, path: Union[str, Path]):
    Path(path).write_bytes(to_bytes(dataset))


def from_arrays(images: np.ndarray, labels: np.ndarray, num_classes: int) -> Dataset:
    """Build a dataset from uint8 images (N, H, W) or (N, H, W, C) and integer labels."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[..., np.newaxis]
    if images.dtype != np.uint8:
        if images.min() < 0 or images.max() > 255:
            raise ValueError("pixel values must lie in 0..255")
        images = images.astype(np.uint8)
    return Dataset(images, np.asarray(labels).astype(np.uint8), num_classes)


def synthesize(seed: int, samples: int, classes: int, shape: Tuple[int, int, int] = (16, 16, 1),
               noise: float = 0.1) -> Dataset:
    """
    Class-conditional binary patterns.

    Each class gets a fixed random binary template; every sample is its
    class template with each bit flipped with probability ``noise``.
    Labels cycle through the classes before shuffling, so class counts
    differ by at most one (exactly balanced when classes divides samples).
    """
    if classes < 2:
        raise ValueError("synthesize needs at least 2 classes")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    h, w, c = shape
    bits = h * w * c
    if bits < 63 and classes > 2 ** bits:
        raise ValueError(f"cannot draw {classes} distinct templates of {bits} bits")

    templates = rng.integers(0, 2, size=(classes, bits), dtype=np.uint8)
    while len({t.tobytes() for t in templates}) < classes:
        templates = rng.integers(0, 2, size=(classes, bits), dtype=np.uint8)

    labels = rng.permutation(np.arange(samples) % classes).astype(np.uint8)
    flips = (rng.random((samples, bits)) < noise).astype(np.uint8)
    sample_bits = templates[labels] ^ flips
    pixels = (sample_bits * 255).astype(np.uint8).reshape(samples, h, w, c)
    return Dataset(pixels, labels, classes)


def split(dataset: Dataset, validation_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Deterministic stratified train/validation split."""
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in range(dataset.num_classes):
        members = np.nonzero(dataset.labels == cls)[0]
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_val = int(round(members.size * validation_fraction))
        if members.size >= 2:
            n_val = min(max(n_val, 1), members.size - 1)
        val_idx.append(members[:n_val])
        train_idx.append(members[n_val:])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.array([], dtype=np.int64)
    val = np.sort(np.concatenate(val_idx)) if val_idx else np.array([], dtype=np.int64)
    return dataset.subset(train, "train"), dataset.subset(val, "validation")
