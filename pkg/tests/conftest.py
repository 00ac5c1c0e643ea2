import os
import struct
from pathlib import Path

import numpy as np
import pytest

from dacnn import nn

MNIST_DIR = Path(os.environ.get("DACNN_MNIST_DIR", "/root/data/mnist"))


def idx_images_bytes(images, magic=0x803, count=None, rows=None, cols=None):
    images = np.asarray(images, dtype=np.uint8)
    n, r, c = images.shape
    header = struct.pack(">IIII", magic, n if count is None else count, r if rows is None else rows,
                         c if cols is None else cols)
    return header + images.tobytes()


def idx_labels_bytes(labels, magic=0x801, count=None):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", magic, len(labels) if count is None else count) + labels.tobytes()


def tiny_model(seed=0, dtype=np.float64, num_classes=3):
    """6x6 input -> conv3 (2) -> relu -> pool2 -> dense 8->K -> relu6."""
    layers = (nn.Conv(1, 2, 3), nn.ReLU(), nn.Subsample(2), nn.Dense(8, num_classes), nn.ReLU6())
    model = nn.NetworkModel(layers, (1, 6, 6), num_classes, dtype)
    return nn.init_parameters(model, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mnist_files():
    names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
    paths = [MNIST_DIR / n for n in names]
    return paths if all(p.is_file() for p in paths) else None


requires_mnist = pytest.mark.skipif(mnist_files() is None, reason=f"MNIST IDX files not found in {MNIST_DIR}")


_ACCEPTANCE = []


def record_acceptance(name, passed, detail):
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
