"""Reader and writer for the IDX binary format used by MNIST."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, DimensionMismatch, LabelOutOfRange, Truncated

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
NUM_CLASSES = 10


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (28, 28) uint8
    label: int


@dataclass(frozen=True)
class BaseDataset:
    """Images and labels held as two parallel arrays.

    ``images`` is ``(n, 28, 28)`` uint8 and ``labels`` is ``(n,)`` uint8.
    """

    images: np.ndarray
    labels: np.ndarray
    source: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(f"{len(self.images)} images vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def head(self, n: int) -> "BaseDataset":
        return BaseDataset(self.images[:n], self.labels[:n], self.source)


def _header(buf: bytes, n_words: int, magic: int) -> tuple[int, ...]:
    if len(buf) < 4:
        raise Truncated("missing magic number")
    (found,) = struct.unpack_from(">I", buf, 0)
    if found != magic:
        raise BadMagic(f"magic {found} (0x{found:08x}), expected {magic}")
    if len(buf) < 4 * n_words:
        raise Truncated("header shorter than expected")
    return struct.unpack_from(">" + "I" * n_words, buf, 0)[1:]


def parse_idx_images(buf: bytes) -> np.ndarray:
    """Parse an IDX image file into an ``(n, 28, 28)`` uint8 array."""
    n, rows, cols = _header(buf, 4, IMAGE_MAGIC)
    if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
        raise DimensionMismatch(f"images are {rows}x{cols}, expected 28x28")
    size = n * rows * cols
    payload = buf[16:16 + size]
    if len(payload) < size:
        raise Truncated(f"payload has {len(payload)} bytes, header promises {size}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols).copy()


def parse_idx_labels(buf: bytes) -> np.ndarray:
    (n,) = _header(buf, 2, LABEL_MAGIC)
    payload = buf[8:8 + n]
    if len(payload) < n:
        raise Truncated(f"payload has {len(payload)} bytes, header promises {n}")
    labels = np.frombuffer(payload, dtype=np.uint8).copy()
    if labels.size and labels.max() >= NUM_CLASSES:
        bad = int(np.argmax(labels >= NUM_CLASSES))
        raise LabelOutOfRange(f"label {labels[bad]} at index {bad}")
    return labels


def write_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    return struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.tobytes()


def write_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes()


def load_dataset(images_path, labels_path) -> BaseDataset:
    images = parse_idx_images(Path(images_path).read_bytes())
    labels = parse_idx_labels(Path(labels_path).read_bytes())
    if len(images) != len(labels):
        raise CountMismatch(f"{images_path} has {len(images)} images, {labels_path} has {len(labels)} labels")
    return BaseDataset(images, labels, source=f"{images_path},{labels_path}")
