"""Rebuild the four canonical MNIST IDX files from the classic ``mnist.pkl.gz``.

The pickle stores pixels as ``byte / 256`` in float32, so the conversion back
to bytes is exact.  Train and validation splits are concatenated in order,
which restores the canonical 60,000-image training file.

    python scripts/mnist_from_pickle.py mnist.pkl.gz OUT_DIR
"""
import gzip
import pickle
import sys
from pathlib import Path

import numpy as np

from dacnn.mnist_io import write_idx_images, write_idx_labels


def main(pkl_path: str, out_dir: str) -> None:
    with gzip.open(pkl_path, "rb") as fh:
        train, valid, test = pickle.load(fh, encoding="latin1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": (np.concatenate([train[0], valid[0]]), np.concatenate([train[1], valid[1]])),
        "t10k": test,
    }
    for prefix, (x, y) in splits.items():
        pixels = np.rint(np.asarray(x, dtype=np.float64) * 256).astype(np.uint8)
        (out / f"{prefix}-images-idx3-ubyte").write_bytes(write_idx_images(pixels.reshape(-1, 28, 28)))
        (out / f"{prefix}-labels-idx1-ubyte").write_bytes(write_idx_labels(np.asarray(y, dtype=np.uint8)))
        print(f"{prefix}: {len(y)} images -> {out}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
