"""Multinomial logistic regression fit by full-batch gradient descent."""

from __future__ import annotations

import numpy as np

from nblend.models.base import (
    Classifier,
    TrainConfig,
    TrainingError,
    check_trainable,
    one_hot,
    softmax,
)


def fit_softmax(
    X: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    learning_rate: float,
    epochs: int,
    l2: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimise mean cross-entropy (+ l2/2 ||W||^2) from a zero start.

    Returns ``(W, b)`` with ``W`` of shape (d, C).
    """
    n, d = X.shape
    Y = one_hot(y, num_classes)
    W = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            P = softmax(X @ W + b)
            G = (P - Y) / n
            W -= learning_rate * (X.T @ G + l2 * W)
            b -= learning_rate * G.sum(axis=0)
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise TrainingError(f"logistic regression diverged at epoch {epoch}")
    return W, b


class LogisticRegression(Classifier):
    kind = "logreg"

    def __init__(self, W: np.ndarray, b: np.ndarray, config: TrainConfig):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.config = config
        self.num_classes = self.W.shape[1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(np.atleast_2d(X) @ self.W + self.b)

    def params(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_params(cls, params, config):
        return cls(np.array(params["W"]), np.array(params["b"]), config)


def train_logreg(train, cfg: TrainConfig) -> LogisticRegression:
    check_trainable(train)
    missing = np.flatnonzero(train.class_counts() == 0)
    if missing.size:
        raise TrainingError(f"classes {missing.tolist()} have no training samples")
    W, b = fit_softmax(train.X, train.y, train.num_classes, cfg.learning_rate, cfg.epochs, cfg.l2)
    return LogisticRegression(W, b, cfg)
