"""Gaussian-blur distortion model and dataset expansion over a blur range."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyResult, FormatError, NegativeSigma, Truncated, VersionMismatch, BadMagic
from .mnist_io import IMAGE_SIDE, BaseDataset

GRID = "grid"
RANDOM = "random"
SCHEMES = (GRID, RANDOM)


@dataclass(frozen=True)
class BlurKernel:
    sigma: float
    radius: int
    weights: np.ndarray


def gaussian_kernel(sigma: float) -> BlurKernel:
    """1-D Gaussian taps truncated at ``ceil(3 * sigma)`` and normalized to sum 1."""
    sigma = float(sigma)
    if not sigma >= 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    radius = math.ceil(3 * sigma)
    if radius == 0:
        return BlurKernel(sigma, 0, np.ones(1))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        w = np.exp(-0.5 * (t / sigma) ** 2)
    return BlurKernel(sigma, radius, w / w.sum())


def _convolve_last_axis(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    r = len(weights) // 2
    width = x.shape[-1]
    pad = [(0, 0)] * (x.ndim - 1) + [(r, r)]
    xp = np.pad(x, pad)
    out = np.zeros_like(x)
    for i, w in enumerate(weights):
        out += w * xp[..., i:i + width]
    return out


def blur(pixels: np.ndarray, q: float) -> np.ndarray:
    """Blur one image or a stack of images (last two axes) with standard deviation ``q``.

    Separable: horizontal pass then vertical pass, zero outside the image.
    """
    kernel = gaussian_kernel(q)
    x = np.asarray(pixels, dtype=np.float64)
    if kernel.radius == 0:
        return x.copy()
    out = _convolve_last_axis(x, kernel.weights)
    out = _convolve_last_axis(out.swapaxes(-1, -2), kernel.weights).swapaxes(-1, -2)
    return np.clip(out, 0.0, 1.0)


@dataclass
class AugmentedDataset:
    """Distorted samples held as parallel arrays.

    pixels: (n, 28, 28) float32 in [0, 1]; labels: (n,) uint8; q: (n,) float64.
    """

    pixels: np.ndarray
    labels: np.ndarray
    q: np.ndarray
    seed: int = 0
    scheme: str = GRID

    def __post_init__(self):
        n = len(self.labels)
        if len(self.pixels) != n or len(self.q) != n:
            raise ValueError("pixels, labels and q must have the same length")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index) -> "AugmentedDataset":
        return AugmentedDataset(self.pixels[index], self.labels[index], self.q[index], self.seed, self.scheme)


def replica_levels(n_images: int, replicas: int, q_lo: float, q_hi: float, scheme: str, seed) -> np.ndarray:
    """Blur levels as an ``(n_images, replicas)`` array."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if not q_lo < q_hi:
        raise ValueError("q_lo must be < q_hi")
    if scheme == GRID:
        if replicas == 1:
            grid = np.array([float(q_lo)])
        else:
            grid = q_lo + np.arange(replicas) * (q_hi - q_lo) / (replicas - 1)
            grid[-1] = q_hi
        return np.broadcast_to(grid, (n_images, replicas)).copy()
    if scheme == RANDOM:
        return np.random.default_rng(seed).uniform(q_lo, q_hi, size=(n_images, replicas))
    raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")


def iter_expanded(base: BaseDataset, replicas=10, q_lo=0.0, q_hi=4.0, scheme=GRID, seed=0, chunk=1000):
    """Yield ``AugmentedDataset`` chunks in base order x replica order."""
    levels = replica_levels(len(base), replicas, q_lo, q_hi, scheme, seed)
    for start in range(0, len(base), chunk):
        stop = min(start + chunk, len(base))
        images = base.images[start:stop].astype(np.float64) / 255.0
        qs = levels[start:stop]
        out = np.empty((stop - start, replicas, IMAGE_SIDE, IMAGE_SIDE), dtype=np.float32)
        if scheme == GRID:
            for j in range(replicas):
                out[:, j] = blur(images, qs[0, j])
        else:
            for i in range(stop - start):
                for j in range(replicas):
                    out[i, j] = blur(images[i], qs[i, j])
        yield AugmentedDataset(
            out.reshape(-1, IMAGE_SIDE, IMAGE_SIDE),
            np.repeat(base.labels[start:stop], replicas),
            qs.reshape(-1),
            seed,
            scheme,
        )


def concat(parts) -> AugmentedDataset:
    parts = list(parts)
    if not parts:
        raise EmptyResult("no samples")
    return AugmentedDataset(
        np.concatenate([p.pixels for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.q for p in parts]),
        parts[0].seed,
        parts[0].scheme,
    )


def expand_dataset(base: BaseDataset, replicas=10, q_lo=0.0, q_hi=4.0, scheme=GRID, seed=0) -> AugmentedDataset:
    """Emit ``replicas`` blurred copies of every base image.

    Pixels are scaled to the unit interval by division by 255 before blurring.
    Under ``GRID`` the levels are evenly spaced from ``q_lo`` to ``q_hi``; under
    ``RANDOM`` they are i.i.d. uniform draws from a generator seeded with ``seed``.
    """
    return concat(iter_expanded(base, replicas, q_lo, q_hi, scheme, seed))


def filter_min_q(dataset: AugmentedDataset, q_min: float = 0.5) -> AugmentedDataset:
    keep = dataset.q >= q_min
    if not keep.any():
        raise EmptyResult(f"no sample has q >= {q_min}")
    return dataset.subset(np.flatnonzero(keep))


# -- binary persistence -------------------------------------------------------

AUG_MAGIC = "DAAUG"
AUG_VERSION = "v1"
RECORD_DTYPE = np.dtype([("label", "u1"), ("q", "<f8"), ("pixels", "<f4", (IMAGE_SIDE * IMAGE_SIDE,))])


def _header_line(count: int, scheme: str, seed) -> bytes:
    return f"{AUG_MAGIC} {AUG_VERSION} count={count} scheme={scheme} seed={seed}\n".encode("ascii")


def _records(ds: AugmentedDataset) -> np.ndarray:
    rec = np.empty(len(ds), dtype=RECORD_DTYPE)
    rec["label"] = ds.labels
    rec["q"] = ds.q
    rec["pixels"] = ds.pixels.reshape(len(ds), IMAGE_SIDE * IMAGE_SIDE)
    return rec


def save_augmented(ds: AugmentedDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_header_line(len(ds), ds.scheme, ds.seed))
        fh.write(_records(ds).tobytes())


def save_augmented_stream(parts, path, count: int, scheme: str, seed) -> int:
    """Write chunks from :func:`iter_expanded` without holding the whole set in memory."""
    written = 0
    with open(path, "wb") as fh:
        fh.write(_header_line(count, scheme, seed))
        for part in parts:
            fh.write(_records(part).tobytes())
            written += len(part)
    if written != count:
        raise ValueError(f"wrote {written} samples, header says {count}")
    return written


def load_augmented(path) -> AugmentedDataset:
    """Read a file written by :func:`save_augmented`.

    Layout: one ASCII header line ``DAAUG v1 count=N scheme=S seed=K`` followed by
    N packed records of (uint8 label, float64 LE q, 784 float32 LE pixels).
    """
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise BadMagic(f"{path}: no header line")
    fields = raw[:newline].decode("ascii", errors="replace").split()
    if not fields or fields[0] != AUG_MAGIC:
        raise BadMagic(f"{path}: not an augmented dataset file")
    if len(fields) < 2 or fields[1] != AUG_VERSION:
        raise VersionMismatch(f"{path}: version {fields[1:2]}, expected {AUG_VERSION}")
    try:
        meta = dict(f.split("=", 1) for f in fields[2:])
        count = int(meta["count"])
        scheme = meta["scheme"]
        seed = meta["seed"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad header {raw[:newline]!r}") from exc
    body = raw[newline + 1:]
    if len(body) < count * RECORD_DTYPE.itemsize:
        raise Truncated(f"{path}: {len(body)} payload bytes, need {count * RECORD_DTYPE.itemsize}")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE, count=count)
    seed = int(seed) if seed.lstrip("-").isdigit() else seed
    return AugmentedDataset(
        rec["pixels"].reshape(count, IMAGE_SIDE, IMAGE_SIDE).copy(),
        rec["label"].copy(),
        rec["q"].copy(),
        seed,
        scheme,
    )
