"""L2-regularised logistic regression, the baseline classifier."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, SingleClassError


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    loss_history: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not (np.isfinite(w).all() and np.isfinite(self.bias)):
            raise DomainError("coefficients must be finite")
        object.__setattr__(self, "weights", w)

    def decision_function(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=np.float64)) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return np.exp(-np.logaddexp(0.0, -z))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": float(self.bias)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"


def _loss(z, y, w, l2):
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))


def train_logistic(X, y, l2: float = 1e-3, epochs: int = 500, lr: float = 0.5,
                   seed: int = 0) -> LinearModel:
    """Full-batch gradient descent on standardised features.

    The seed only draws the small random initial weights.  Coefficients are
    mapped back to the original feature scale before returning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise DomainError("features must be finite")
    if len(np.unique(y)) < 2:
        raise SingleClassError("logistic regression needs both classes")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=0.01, size=X.shape[1])
    b = 0.0
    history = []
    n = len(y)
    for _ in range(epochs):
        z = Z @ w + b
        history.append(_loss(z, y, w, l2))
        if not np.isfinite(history[-1]):
            raise ConvergenceError("logistic loss diverged; use a smaller learning rate",
                                   last=(w, b))
        p = np.exp(-np.logaddexp(0.0, -z))
        err = p - y
        w = w - lr * (Z.T @ err / n + l2 * w)
        b = b - lr * float(err.mean())
    history.append(_loss(Z @ w + b, y, w, l2))
    if not np.isfinite(history[-1]):
        raise ConvergenceError("logistic loss diverged; use a smaller learning rate", last=(w, b))
    return LinearModel(w / sd, b - float(np.dot(w, mu / sd)), tuple(history))
