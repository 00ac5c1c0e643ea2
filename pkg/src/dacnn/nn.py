"""Small convolutional network engine with hand-written backward passes.

Activations are batched NCHW arrays. A :class:`NetworkModel` keeps the
activations of its last ``forward`` call so that ``backward`` can be called
once afterwards; one model instance therefore serves one caller at a time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NoForwardState, ShapeMismatch


def relu(x):
    return np.maximum(x, 0)


def relu6(x):
    return np.minimum(np.maximum(x, 0), 6)


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# -- layer specifications ------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1


@dataclass(frozen=True)
class Subsample:
    pool_size: int


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class ReLU6:
    pass


LayerSpec = Union[Conv, Subsample, Dense, ReLU, ReLU6]


def output_shape(spec: LayerSpec, shape: tuple) -> tuple:
    """Per-sample output shape of ``spec`` for per-sample input ``shape``."""
    if isinstance(spec, Conv):
        if len(shape) != 3 or shape[0] != spec.in_channels:
            raise ShapeMismatch(f"{spec} cannot take input of shape {shape}")
        c, h, w = shape
        k, s = spec.kernel_size, spec.stride
        if h < k or w < k:
            raise ShapeMismatch(f"{spec} kernel larger than input {shape}")
        return (spec.out_channels, (h - k) // s + 1, (w - k) // s + 1)
    if isinstance(spec, Subsample):
        if len(shape) != 3 or shape[1] % spec.pool_size or shape[2] % spec.pool_size:
            raise ShapeMismatch(f"{spec} needs spatial dims divisible by the pool size, got {shape}")
        c, h, w = shape
        return (c, h // spec.pool_size, w // spec.pool_size)
    if isinstance(spec, Dense):
        if int(np.prod(shape)) != spec.in_dim:
            raise ShapeMismatch(f"{spec} cannot take input of shape {shape}")
        return (spec.out_dim,)
    return shape


def param_shapes(spec: LayerSpec) -> tuple:
    if isinstance(spec, Conv):
        return ((spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size), (spec.out_channels,))
    if isinstance(spec, Dense):
        return ((spec.out_dim, spec.in_dim), (spec.out_dim,))
    return ()


def fans(spec: LayerSpec) -> tuple[int, int]:
    if isinstance(spec, Conv):
        area = spec.kernel_size ** 2
        return spec.in_channels * area, spec.out_channels * area
    return spec.in_dim, spec.out_dim


# -- per-kind forward/backward ---------------------------------------------------

def _conv_forward(x, w, b, stride):
    n, c, h, _ = x.shape
    o, _, k, _ = w.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ w.reshape(o, -1).T + b
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def _conv_backward(grad, x_shape, cols, w, stride):
    n, c, h, wd = x_shape
    o, _, k, _ = w.shape
    ho, wo = grad.shape[2], grad.shape[3]
    g = grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
    dw = (g.T @ cols).reshape(w.shape)
    db = g.sum(axis=0)
    dcols = (g @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dx = np.zeros(x_shape, dtype=grad.dtype)
    span_h = stride * (ho - 1) + 1
    span_w = stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + span_h:stride, j:j + span_w:stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x, p):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // p, p, w // p, p).mean(axis=(3, 5))


def _pool_backward(grad, p):
    g = grad / (p * p)
    return np.repeat(np.repeat(g, p, axis=2), p, axis=3)


# -- model ---------------------------------------------------------------------

class NetworkModel:
    """Ordered layer specs plus their weight and bias arrays.

    ``params[i]`` is ``[weight, bias]`` for Conv and Dense layers and ``[]``
    otherwise.
    """

    def __init__(self, layers, input_shape=(1, 28, 28), num_classes=10, dtype=np.float32):
        self.layers = tuple(layers)
        self.input_shape = tuple(input_shape)
        self.num_classes = int(num_classes)
        self.dtype = np.dtype(dtype)
        self.params = [[np.zeros(s, dtype=self.dtype) for s in param_shapes(spec)] for spec in self.layers]
        self._cache = None
        self._validate()

    def _validate(self):
        if self.num_classes < 2:
            raise ShapeMismatch("num_classes must be at least 2")
        shape = self.input_shape
        for spec in self.layers:
            shape = output_shape(spec, shape)
        if not self.layers or not isinstance(self.layers[-1], ReLU6):
            raise ShapeMismatch("the last layer must be ReLU6")
        if shape != (self.num_classes,):
            raise ShapeMismatch(f"network emits {shape}, expected ({self.num_classes},)")

    @property
    def n_parameters(self) -> int:
        return sum(p.size for group in self.params for p in group)

    def copy(self) -> "NetworkModel":
        other = NetworkModel(self.layers, self.input_shape, self.num_classes, self.dtype)
        other.params = [[p.copy() for p in group] for group in self.params]
        return other

    def astype(self, dtype) -> "NetworkModel":
        other = NetworkModel(self.layers, self.input_shape, self.num_classes, dtype)
        other.params = [[p.astype(dtype) for p in group] for group in self.params]
        return other

    def _as_batch(self, x):
        """Return ``(batch, single)``; 3-D input to a one-channel model is a batch."""
        x = np.asarray(x, dtype=self.dtype)
        spatial = self.input_shape[1:]
        one_channel = self.input_shape[0] == 1
        if one_channel and x.shape == spatial:
            return x[None, None], True
        if one_channel and x.ndim == len(self.input_shape) and x.shape[1:] == spatial:
            return x[:, None], False
        if x.shape == self.input_shape:
            return x[None], True
        if x.shape[1:] == self.input_shape:
            return x, False
        raise ShapeMismatch(f"input of shape {x.shape} does not match {self.input_shape}")

    def forward(self, x) -> np.ndarray:
        """Logits in ``[0, 6]`` for one image ``(28, 28)`` or a batch ``(n, 28, 28)``."""
        a, single = self._as_batch(x)
        cache = []
        for spec, group in zip(self.layers, self.params):
            if isinstance(spec, Conv):
                out, cols = _conv_forward(a, group[0], group[1], spec.stride)
                cache.append((a.shape, cols))
            elif isinstance(spec, Subsample):
                out = _pool_forward(a, spec.pool_size)
                cache.append(a.shape)
            elif isinstance(spec, Dense):
                flat = a.reshape(len(a), -1)
                out = flat @ group[0].T + group[1]
                cache.append((a.shape, flat))
            elif isinstance(spec, ReLU):
                out = relu(a)
                cache.append(a > 0)
            else:
                out = relu6(a)
                cache.append((a > 0) & (a < 6))
            a = out
        self._cache = (cache, single)
        return a[0] if single else a

    def backward(self, upstream):
        """Gradients of ``sum(upstream * logits)`` from the last forward call.

        Returns ``(param_grads, input_grad)``, with ``param_grads`` shaped like
        ``params``. The activation cache is consumed.
        """
        if self._cache is None:
            raise NoForwardState("backward called without a preceding forward")
        cache, single = self._cache
        self._cache = None
        g = np.asarray(upstream, dtype=self.dtype)
        if single:
            g = g[None]
        if g.shape[-1] != self.num_classes:
            raise ShapeMismatch(f"upstream gradient has shape {g.shape}")
        grads = [[] for _ in self.layers]
        for idx in range(len(self.layers) - 1, -1, -1):
            spec, saved = self.layers[idx], cache[idx]
            if isinstance(spec, Conv):
                x_shape, cols = saved
                g, dw, db = _conv_backward(g, x_shape, cols, self.params[idx][0], spec.stride)
                grads[idx] = [dw, db]
            elif isinstance(spec, Subsample):
                g = _pool_backward(g, spec.pool_size)
            elif isinstance(spec, Dense):
                x_shape, flat = saved
                grads[idx] = [g.T @ flat, g.sum(axis=0)]
                g = (g @ self.params[idx][0]).reshape(x_shape)
            else:
                g = g * saved
        return grads, (g[0] if single else g)

    def predict_logits(self, x, batch_size=1000) -> np.ndarray:
        """Forward in chunks without keeping activations."""
        a, single = self._as_batch(x)
        out = [self.forward(a[i:i + batch_size]) for i in range(0, len(a), batch_size)]
        self._cache = None
        logits = np.concatenate(out) if out else np.zeros((0, self.num_classes), self.dtype)
        return logits[0] if single else logits


def init_parameters(model: NetworkModel, seed) -> NetworkModel:
    """Glorot-uniform weights, zero biases; fills ``model`` in place and returns it."""
    rng = np.random.default_rng(seed)
    for spec, group in zip(model.layers, model.params):
        if not group:
            continue
        fan_in, fan_out = fans(spec)
        s = np.sqrt(6.0 / (fan_in + fan_out))
        group[0][...] = rng.uniform(-s, s, size=group[0].shape)
        group[1][...] = 0
    return model


def lenet_layers(num_classes: int = 10) -> tuple:
    return (
        Conv(1, 6, 5), ReLU(), Subsample(2),
        Conv(6, 12, 5), ReLU(), Subsample(2),
        Dense(12 * 4 * 4, 64), ReLU(),
        Dense(64, num_classes), ReLU6(),
    )


def build_lenet_like(num_classes: int = 10, dtype=np.float32) -> NetworkModel:
    """The reference LeNet5-style architecture (zero parameters; see :func:`init_parameters`).

    28x28 -> conv5 (6) -> pool2 -> conv5 (12) -> pool2 -> dense 64 -> dense K -> ReLU6.
    """
    if num_classes < 2:
        raise ShapeMismatch("num_classes must be at least 2")
    return NetworkModel(lenet_layers(num_classes), (1, 28, 28), num_classes, dtype)
