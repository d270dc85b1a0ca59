"""
Small differentiable classifiers on flat parameter vectors.

Two architectures share one interface: multiclass softmax regression and a
one-hidden-layer tanh network. Gradients are analytic (cross-entropy loss,
mean over the batch).
"""
from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np

from clusteragg.core.exceptions import DimensionMismatchError, PreconditionError
from clusteragg.schemas.training import ModelArchitecture, ModelConfig


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(labels.shape[0]), labels]))


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


class Model(ABC):
    """Classifier over a flat parameter vector ``theta``."""

    def __init__(self, n_features: int, n_classes: int):
        self.n_features = n_features
        self.n_classes = n_classes

    @property
    @abstractmethod
    def dim(self) -> int:
        """Length of ``theta``."""

    @abstractmethod
    def init(self, rng: np.random.Generator, scale: float) -> np.ndarray:
        ...

    @abstractmethod
    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def loss_and_grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
        ...

    @abstractmethod
    def per_sample_grads(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``(b, dim)`` gradients of the single-sample losses."""

    def _check(self, theta: np.ndarray, X: np.ndarray) -> None:
        if theta.shape != (self.dim,):
            raise DimensionMismatchError(self.dim, int(theta.size))
        if X.shape[0] == 0:
            raise PreconditionError("Cannot evaluate the model on an empty batch")

    def loss(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        self._check(theta, X)
        return _cross_entropy(self.logits(theta, X), y)

    def accuracy(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        self._check(theta, X)
        return float(np.mean(self.logits(theta, X).argmax(axis=1) == y))


class SoftmaxRegression(Model):
    """logits = X W + b."""

    @property
    def dim(self) -> int:
        return self.n_features * self.n_classes + self.n_classes

    def _unpack(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        split = self.n_features * self.n_classes
        return theta[:split].reshape(self.n_features, self.n_classes), theta[split:]

    def init(self, rng: np.random.Generator, scale: float) -> np.ndarray:
        return scale * rng.standard_normal(self.dim)

    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        W, b = self._unpack(theta)
        return X @ W + b

    def loss_and_grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
        self._check(theta, X)
        logits = self.logits(theta, X)
        delta = (_softmax(logits) - _one_hot(y, self.n_classes)) / X.shape[0]
        grad = np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])
        return _cross_entropy(logits, y), grad

    def per_sample_grads(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check(theta, X)
        delta = _softmax(self.logits(theta, X)) - _one_hot(y, self.n_classes)
        weights = np.einsum("bi,bj->bij", X, delta).reshape(X.shape[0], -1)
        return np.hstack([weights, delta])


class OneHiddenLayerNet(Model):
    """logits = tanh(X W1 + b1) W2 + b2."""

    def __init__(self, n_features: int, n_classes: int, hidden: int):
        super().__init__(n_features, n_classes)
        self.hidden = hidden

    @property
    def dim(self) -> int:
        F, H, C = self.n_features, self.hidden, self.n_classes
        return F * H + H + H * C + C

    def _unpack(self, theta: np.ndarray):
        F, H, C = self.n_features, self.hidden, self.n_classes
        a = F * H
        b = a + H
        c = b + H * C
        return theta[:a].reshape(F, H), theta[a:b], theta[b:c].reshape(H, C), theta[c:]

    def init(self, rng: np.random.Generator, scale: float) -> np.ndarray:
        F, H, C = self.n_features, self.hidden, self.n_classes
        W1 = rng.standard_normal((F, H)) / np.sqrt(F)
        W2 = rng.standard_normal((H, C)) * max(scale, 1e-3)
        return np.concatenate([W1.ravel(), np.zeros(H), W2.ravel(), np.zeros(C)])

    def _forward(self, theta: np.ndarray, X: np.ndarray):
        W1, b1, W2, b2 = self._unpack(theta)
        hidden = np.tanh(X @ W1 + b1)
        return hidden, hidden @ W2 + b2

    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        return self._forward(theta, X)[1]

    def loss_and_grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
        self._check(theta, X)
        _, _, W2, _ = self._unpack(theta)
        hidden, logits = self._forward(theta, X)
        delta_out = (_softmax(logits) - _one_hot(y, self.n_classes)) / X.shape[0]
        delta_hidden = (delta_out @ W2.T) * (1.0 - hidden ** 2)
        grad = np.concatenate([
            (X.T @ delta_hidden).ravel(),
            delta_hidden.sum(axis=0),
            (hidden.T @ delta_out).ravel(),
            delta_out.sum(axis=0),
        ])
        return _cross_entropy(logits, y), grad

    def per_sample_grads(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check(theta, X)
        _, _, W2, _ = self._unpack(theta)
        hidden, logits = self._forward(theta, X)
        delta_out = _softmax(logits) - _one_hot(y, self.n_classes)
        delta_hidden = (delta_out @ W2.T) * (1.0 - hidden ** 2)
        b = X.shape[0]
        return np.hstack([
            np.einsum("bi,bj->bij", X, delta_hidden).reshape(b, -1),
            delta_hidden,
            np.einsum("bi,bj->bij", hidden, delta_out).reshape(b, -1),
            delta_out,
        ])


def build_model(config: ModelConfig, n_features: int, n_classes: int) -> Model:
    if config.architecture is ModelArchitecture.MLP:
        return OneHiddenLayerNet(n_features, n_classes, config.hidden_units)
    return SoftmaxRegression(n_features, n_classes)
