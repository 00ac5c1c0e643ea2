"""Mini-batch SGD training with or without the Gaussian head, and model files."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .augment import AugmentedDataset
from .errors import BadMagic, ConfigError, FormatError, LabelOutOfRange, NumericalFailure, Truncated, VersionMismatch
from .rbf import RbfConfig, center_for_q, rbf_backward, rbf_transform

log = logging.getLogger(__name__)

BASELINE = "baseline"
RBF = "rbf"
MODES = (BASELINE, RBF)
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    mode: str = RBF
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")


@dataclass
class TrainedModel:
    model: nn.NetworkModel
    mode_trained: str
    history: list = field(default_factory=list)  # (epoch, loss, accuracy)
    config_snapshot: dict = field(default_factory=dict)


def cross_entropy(probabilities, label) -> float:
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if not 0 <= label < probabilities.shape[-1]:
        raise LabelOutOfRange(f"label {label} outside 0..{probabilities.shape[-1] - 1}")
    return float(-np.log(max(probabilities[label], PROB_FLOOR)))


def logit_loss_grad(z, y, q=None, mode=BASELINE, rbf_cfg: RbfConfig | None = None):
    """Mean cross-entropy of a batch of logits and its gradient with respect to them.

    In ``RBF`` mode the softmax is taken over the Gaussian-head outputs,
    centred per sample on the logit that corresponds to that sample's q.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if mode == RBF:
        if q is None:
            raise ConfigError("RBF mode needs the blur level of every sample")
        zeta = center_for_q(np.asarray(q, dtype=np.float64), rbf_cfg)
        u = rbf_transform(z, zeta, rbf_cfg)
    elif mode == BASELINE:
        u = z
    else:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    s = nn.softmax(u)
    picked = s[np.arange(n), y]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    du = s.copy()
    du[np.arange(n), y] -= 1.0
    du /= n
    dz = rbf_backward(z, zeta, rbf_cfg, du) if mode == RBF else du
    return loss, dz


def batch_loss_and_grad(model: nn.NetworkModel, x, y, q=None, mode=BASELINE, rbf_cfg: RbfConfig | None = None):
    """Forward, loss and backward for one batch; returns ``(loss, grads, logits)``."""
    z = model.forward(x)
    loss, dz = logit_loss_grad(z, y, q, mode, rbf_cfg)
    grads, _ = model.backward(dz)
    return loss, grads, z


class SGDMomentum:
    """``v <- mu * v - lr * g``; ``w <- w + v``."""

    def __init__(self, model: nn.NetworkModel, learning_rate: float, momentum: float):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = [[np.zeros_like(p) for p in group] for group in model.params]

    def step(self, model: nn.NetworkModel, grads) -> None:
        for params, vel, grad in zip(model.params, self.velocity, grads):
            for p, v, g in zip(params, vel, grad):
                v *= self.momentum
                v -= self.learning_rate * g.astype(p.dtype)
                p += v


def train_step(model, x, y, q, mode, rbf_cfg, optimizer: SGDMomentum) -> float:
    if len(y) == 0:
        raise ValueError("empty batch")
    loss, grads, _ = batch_loss_and_grad(model, x, y, q, mode, rbf_cfg)
    optimizer.step(model, grads)
    return loss


def train(dataset: AugmentedDataset, net: nn.NetworkModel, train_cfg: TrainConfig,
          rbf_cfg: RbfConfig | None = None, callback=None) -> TrainedModel:
    """Train a copy of ``net``; the returned model never carries the head.

    ``callback(epoch, loss, accuracy)`` runs after each epoch.
    """
    rbf_cfg = rbf_cfg or RbfConfig(num_classes=net.num_classes)
    if train_cfg.mode == RBF:
        # fail fast on bad q rather than mid-epoch
        center_for_q(dataset.q, rbf_cfg)
    model = net.copy()
    opt = SGDMomentum(model, train_cfg.learning_rate, train_cfg.momentum)
    rng = np.random.default_rng(train_cfg.seed)
    n = len(dataset)
    history = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n) if train_cfg.shuffle else np.arange(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, train_cfg.batch_size):
            idx = np.sort(order[start:start + train_cfg.batch_size])
            y = dataset.labels[idx]
            loss, grads, z = batch_loss_and_grad(
                model, dataset.pixels[idx], y, dataset.q[idx], train_cfg.mode, rbf_cfg)
            if not np.isfinite(loss):
                raise NumericalFailure(f"non-finite loss at epoch {epoch}")
            opt.step(model, grads)
            total_loss += loss * len(idx)
            correct += int((np.argmax(z, axis=1) == y).sum())
        row = (epoch, total_loss / n, correct / n)
        history.append(row)
        log.info("epoch %d loss %.5f acc %.4f", *row)
        if callback is not None:
            callback(*row)
    snapshot = {"train": asdict(train_cfg), "rbf": rbf_cfg.as_dict()}
    return TrainedModel(model, train_cfg.mode, history, snapshot)


def write_history_csv(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,accuracy\n")
        for epoch, loss, acc in history:
            fh.write(f"{epoch},{loss:.9g},{acc:.9g}\n")


# -- model file -----------------------------------------------------------------

MODEL_MAGIC = "DACNN"
MODEL_VERSION = "v1"
PAYLOAD_MARK = "payload"


def layer_to_line(spec) -> str:
    if isinstance(spec, nn.Conv):
        return f"layer=conv in={spec.in_channels} out={spec.out_channels} kernel={spec.kernel_size} stride={spec.stride}"
    if isinstance(spec, nn.Subsample):
        return f"layer=subsample pool={spec.pool_size}"
    if isinstance(spec, nn.Dense):
        return f"layer=dense in={spec.in_dim} out={spec.out_dim}"
    return "layer=relu6" if isinstance(spec, nn.ReLU6) else "layer=relu"


def line_to_layer(line: str):
    parts = line.split()
    kind = parts[0].split("=", 1)[1]
    kv = {k: int(v) for k, v in (p.split("=", 1) for p in parts[1:])}
    if kind == "conv":
        return nn.Conv(kv["in"], kv["out"], kv["kernel"], kv.get("stride", 1))
    if kind == "subsample":
        return nn.Subsample(kv["pool"])
    if kind == "dense":
        return nn.Dense(kv["in"], kv["out"])
    if kind == "relu":
        return nn.ReLU()
    if kind == "relu6":
        return nn.ReLU6()
    raise FormatError(f"unknown layer kind {kind!r}")


def _flatten_snapshot(snapshot: dict, prefix="config") -> list[str]:
    lines = []
    for key, value in snapshot.items():
        name = f"{prefix}.{key}"
        if isinstance(value, dict):
            lines += _flatten_snapshot(value, name)
        else:
            lines.append(f"{name}={value}")
    return lines


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    return text


def save_model(trained: TrainedModel, path) -> None:
    """Write the ``DACNN v1`` format.

    A text header (magic line, ``key=value`` lines, one ``layer=`` line per
    layer, ``history=`` lines, ``config.*`` lines) closed by a ``payload``
    line, then every weight and bias as little-endian float32 in layer order.
    """
    model = trained.model
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"num_classes={model.num_classes}",
        "input_shape=" + ",".join(str(d) for d in model.input_shape),
        f"mode={trained.mode_trained}",
        f"n_parameters={model.n_parameters}",
    ]
    lines += [layer_to_line(spec) for spec in model.layers]
    lines += [f"history={e},{loss!r},{acc!r}" for e, loss, acc in trained.history]
    lines += _flatten_snapshot(trained.config_snapshot)
    lines.append(PAYLOAD_MARK)
    payload = b"".join(p.astype("<f4").tobytes() for group in model.params for p in group)
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii") + payload)


def load_model(path) -> TrainedModel:
    raw = Path(path).read_bytes()
    first = raw.split(b"\n", 1)[0].decode("ascii", errors="replace").split()
    if not first or first[0] != MODEL_MAGIC:
        raise BadMagic(f"{path}: not a {MODEL_MAGIC} model file")
    if len(first) < 2 or first[1] != MODEL_VERSION:
        raise VersionMismatch(f"{path}: version {' '.join(first[1:])!r}, expected {MODEL_VERSION}")
    mark = b"\n" + PAYLOAD_MARK.encode() + b"\n"
    cut = raw.find(mark)
    if cut < 0:
        raise Truncated(f"{path}: header is not terminated")
    header = raw[:cut].decode("ascii").split("\n")[1:]
    payload = raw[cut + len(mark):]
    layers, history, meta, snapshot = [], [], {}, {}
    for line in header:
        key, _, value = line.partition("=")
        if key == "layer":
            layers.append(line_to_layer(line))
        elif key == "history":
            e, loss, acc = value.split(",")
            history.append((int(e), float(loss), float(acc)))
        elif key.startswith("config."):
            node = snapshot
            *parents, leaf = key.split(".")[1:]
            for part in parents:
                node = node.setdefault(part, {})
            node[leaf] = _coerce(value)
        else:
            meta[key] = value
    try:
        model = nn.NetworkModel(
            layers,
            tuple(int(d) for d in meta["input_shape"].split(",")),
            int(meta["num_classes"]),
            np.float32,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: header lacks {exc}") from exc
    need = model.n_parameters * 4
    if len(payload) < need:
        raise Truncated(f"{path}: payload has {len(payload)} bytes, need {need}")
    values = np.frombuffer(payload, dtype="<f4", count=model.n_parameters)
    offset = 0
    for group in model.params:
        for p in group:
            p[...] = values[offset:offset + p.size].reshape(p.shape)
            offset += p.size
    return TrainedModel(model, meta.get("mode", BASELINE), history, snapshot)


def train_config_from_snapshot(snapshot: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in snapshot.get("train", {}).items() if k in known})


def rbf_config_from_snapshot(snapshot: dict) -> RbfConfig:
    known = {f.name for f in fields(RbfConfig)}
    return RbfConfig(**{k: v for k, v in snapshot.get("rbf", {}).items() if k in known})
