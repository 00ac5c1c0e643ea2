"""scikit-learn compatible wrappers around the functional core.

``BlurTransformer`` applies the distortion, ``DistortionAwareCNN`` trains the
network (optionally through the Gaussian head) and predicts with the bare
network, and ``IntervalQuantileRegressor`` fits one quantile line per blur
interval.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import augment, evaluate, nn, quantile, trainer
from .errors import ConfigError
from .rbf import RbfConfig

IMAGE_SHAPE = (28, 28)


def check_images(X, dtype=np.float32) -> np.ndarray:
    """Accept ``(n, 784)`` or ``(n, 28, 28)`` images and return ``(n, 28, 28)``."""
    X = check_array(X, allow_nd=True, dtype=dtype, ensure_all_finite=True)
    if X.ndim == 2 and X.shape[1] == 784:
        X = X.reshape(-1, *IMAGE_SHAPE)
    if X.shape[1:] != IMAGE_SHAPE:
        raise ValueError(f"expected images of shape (n, 28, 28) or (n, 784), got {X.shape}")
    return X


def _check_q(q, n) -> np.ndarray:
    q = check_array(np.asarray(q, dtype=np.float64).reshape(-1, 1), ensure_all_finite=True).ravel()
    if len(q) != n:
        raise ValueError(f"q has {len(q)} entries for {n} samples")
    return q


class BlurTransformer(TransformerMixin, BaseEstimator):
    """Gaussian blur with standard deviation ``q`` (stateless)."""

    def __init__(self, q=1.0):
        self.q = q

    def fit(self, X, y=None):
        check_images(X, dtype=np.float64)
        return self

    def transform(self, X):
        X = check_images(X, dtype=np.float64)
        return augment.blur(X, self.q)


class DistortionAwareCNN(ClassifierMixin, BaseEstimator):
    """LeNet-style classifier trained with or without the Gaussian head.

    ``fit(X, y, q=...)`` needs the blur level of every image when
    ``head="rbf"``. Prediction never uses the head: ``predict_proba`` is the
    softmax of the network's own logits.
    """

    def __init__(self, head="rbf", epochs=200, batch_size=64, learning_rate=0.01, momentum=0.9,
                 random_state=0, shuffle=True, p_max=0.6, p_min=0.3, q_range=(0.0, 4.0), peak=6.0,
                 sigma_rbf=0.7, num_classes=10, verbose=False):
        self.head = head
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.random_state = random_state
        self.shuffle = shuffle
        self.p_max = p_max
        self.p_min = p_min
        self.q_range = q_range
        self.peak = peak
        self.sigma_rbf = sigma_rbf
        self.num_classes = num_classes
        self.verbose = verbose

    def _mode(self) -> str:
        if self.head == "rbf":
            return trainer.RBF
        if self.head in (None, "none", "baseline"):
            return trainer.BASELINE
        raise ConfigError(f"head must be 'rbf' or 'none', got {self.head!r}")

    def rbf_config(self) -> RbfConfig:
        a, b = self.q_range
        return RbfConfig(self.p_max, self.p_min, a, b, self.peak, self.sigma_rbf, self.num_classes)

    def train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(self._mode(), self.epochs, self.batch_size, self.learning_rate,
                                   self.momentum, self.random_state, self.shuffle)

    def fit(self, X, y, q=None):
        X = check_images(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"{len(X)} images but {len(y)} labels")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in 0..{self.num_classes - 1}")
        mode = self._mode()
        if q is None:
            if mode == trainer.RBF:
                raise ValueError("head='rbf' needs q, the blur level of every training image")
            q = np.zeros(len(X))
        q = _check_q(q, len(X))
        data = augment.AugmentedDataset(X, y.astype(np.uint8), q)
        net = nn.init_parameters(nn.build_lenet_like(self.num_classes), self.random_state)
        callback = (lambda e, loss, acc: print(f"epoch {e} loss {loss:.5f} acc {acc:.4f}")) if self.verbose else None
        self.trained_ = trainer.train(data, net, self.train_config(), self.rbf_config(), callback)
        self.model_ = self.trained_.model
        self.history_ = list(self.trained_.history)
        self.classes_ = np.arange(self.num_classes)
        self.n_features_in_ = 784
        return self

    @classmethod
    def from_trained(cls, trained: trainer.TrainedModel) -> "DistortionAwareCNN":
        """Wrap a model produced by :func:`trainer.train` or :func:`trainer.load_model`."""
        est = cls(head="rbf" if trained.mode_trained == trainer.RBF else "none",
                  num_classes=trained.model.num_classes)
        est.trained_ = trained
        est.model_ = trained.model
        est.history_ = list(trained.history)
        est.classes_ = np.arange(trained.model.num_classes)
        est.n_features_in_ = 784
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_logits(check_images(X))

    def predict_proba(self, X):
        return nn.softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def confidence(self, X):
        return self.predict_proba(X).max(axis=1)

    def evaluate(self, X, y, q) -> evaluate.EvalRecords:
        X = check_images(X)
        data = augment.AugmentedDataset(X, np.asarray(y, dtype=np.uint8), _check_q(q, len(X)))
        return evaluate.evaluate_model(self.model_, data)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        trainer.save_model(self.trained_, path)


class IntervalQuantileRegressor(RegressorMixin, BaseEstimator):
    """Piecewise-linear ``tau``-quantile of a response given blur level.

    ``X`` is the blur level (one column). Intervals without enough data have
    no line; ``predict`` returns NaN there.
    """

    def __init__(self, tau=0.5, breakpoints=quantile.DEFAULT_BREAKPOINTS, min_points=10):
        self.tau = tau
        self.breakpoints = breakpoints
        self.min_points = min_points

    def fit(self, X, y):
        X = check_array(X, ensure_all_finite=True, ensure_2d=False, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if len(X) != len(y):
            raise ValueError("X and y differ in length")
        records = evaluate.EvalRecords(X, np.zeros(len(X)), np.zeros(len(X)), y)
        self.fits_, self.problems_ = quantile.fit_interval_models(
            records, self.tau, tuple(self.breakpoints), self.min_points)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fits_")
        X = check_array(X, ensure_all_finite=True, ensure_2d=False, dtype=np.float64).reshape(-1)
        out = np.full(len(X), np.nan)
        for fit, (_, mask) in zip(self.fits_, quantile.interval_masks(X, tuple(self.breakpoints))):
            if fit is not None:
                out[mask] = fit.predict(X[mask])
        return out
