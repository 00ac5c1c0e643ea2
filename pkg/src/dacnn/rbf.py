"""Distortion-conditioned Gaussian head used only while training.

The head maps a blur level ``q`` to a target confidence ``p`` (linear in q),
turns ``p`` into the logit ``zeta`` whose one-hot softmax confidence equals
``p``, and passes every logit through a Gaussian bump centred on ``zeta``.
Nothing here is stored in the network, so dropping the head after training
leaves the network untouched.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, POutOfRange, QOutOfRange


@dataclass(frozen=True)
class RbfConfig:
    p_max: float = 0.6
    p_min: float = 0.3
    a: float = 0.0
    b: float = 4.0
    peak: float = 6.0
    sigma_rbf: float = 0.7
    num_classes: int = 10

    def __post_init__(self):
        if not 0 < self.p_min < self.p_max < 1:
            raise ConfigError(f"need 0 < p_min < p_max < 1, got p_min={self.p_min}, p_max={self.p_max}")
        if not self.a < self.b:
            raise ConfigError(f"need a < b, got a={self.a}, b={self.b}")
        if not self.peak > 0 or not self.sigma_rbf > 0:
            raise ConfigError("peak and sigma_rbf must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")

    def as_dict(self) -> dict:
        return asdict(self)


def target_estimate(q, cfg: RbfConfig):
    """Target confidence, falling linearly from ``p_max`` at ``a`` to ``p_min`` at ``b``."""
    q = np.asarray(q, dtype=np.float64)
    if np.any(~((q >= cfg.a) & (q <= cfg.b))):
        raise QOutOfRange(f"q must lie in [{cfg.a}, {cfg.b}]")
    p = cfg.p_max - (cfg.p_max - cfg.p_min) * (q - cfg.a) / (cfg.b - cfg.a)
    return p if p.ndim else float(p)


def center_from_target(p, num_classes: int):
    """Logit whose softmax against ``K - 1`` zero logits gives confidence ``p``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(~((p > 0) & (p < 1))):
        raise POutOfRange("p must lie strictly between 0 and 1")
    if num_classes < 2:
        raise ConfigError("num_classes must be at least 2")
    zeta = np.log(p * (num_classes - 1)) - np.log1p(-p)
    return zeta if zeta.ndim else float(zeta)


def logit_confidence(zeta, num_classes: int):
    """Inverse of :func:`center_from_target`: ``exp(zeta) / (exp(zeta) + K - 1)``."""
    zeta = np.asarray(zeta, dtype=np.float64)
    # 1 / (1 + (K-1) e^-zeta) is the same quantity without overflow for large zeta
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + (num_classes - 1) * np.exp(-zeta))
    return p if p.ndim else float(p)


def center_for_q(q, cfg: RbfConfig):
    return center_from_target(target_estimate(q, cfg), cfg.num_classes)


def _broadcast_center(z, zeta):
    zeta = np.asarray(zeta, dtype=np.float64)
    if zeta.ndim == 1 and z.ndim == 2:
        zeta = zeta[:, None]
    return zeta


def rbf_transform(z, zeta, cfg: RbfConfig):
    """``peak * exp(-(z - zeta)^2 / (2 sigma_rbf^2))`` element-wise.

    ``z`` is one logit vector ``(K,)`` or a batch ``(n, K)``; ``zeta`` is a
    scalar or one centre per row.
    """
    z = np.asarray(z, dtype=np.float64)
    d = z - _broadcast_center(z, zeta)
    return cfg.peak * np.exp(-(d * d) / (2 * cfg.sigma_rbf ** 2))


def rbf_backward(z, zeta, cfg: RbfConfig, upstream):
    """Gradient with respect to ``z``; ``zeta`` is treated as a constant."""
    z = np.asarray(z, dtype=np.float64)
    d = z - _broadcast_center(z, zeta)
    g = cfg.peak * np.exp(-(d * d) / (2 * cfg.sigma_rbf ** 2))
    return np.asarray(upstream, dtype=np.float64) * g * (-d / cfg.sigma_rbf ** 2)
