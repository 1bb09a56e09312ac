"""Feed-forward ReLU network with a softmax head, trained by mini-batch SGD."""

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


def init_params(sizes: list[int], rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params, X):
    """Return the softmax output and the list of layer activations."""
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = params[-1]
    return softmax(h @ W + b), acts


def loss_and_grads(params, X, Y, l2: float = 0.0):
    """Mean cross-entropy (+ l2/2 sum ||W||^2) and its exact gradients.

    ``Y`` is one-hot. Gradients come back in the same structure as ``params``.
    """
    n = X.shape[0]
    P, acts = forward(params, X)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n
    loss += 0.5 * l2 * sum(np.sum(W * W) for W, _ in params)
    grads = [None] * len(params)
    delta = (P - Y) / n
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        a = acts[layer]
        grads[layer] = (a.T @ delta + l2 * W, delta.sum(axis=0))
        if layer:
            delta = (delta @ W.T) * (a > 0)
    return loss, grads


class MLP(Classifier):
    kind = "mlp"

    def __init__(self, params, config: TrainConfig):
        self.layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for W, b in params]
        self.config = config
        self.num_classes = self.layers[-1][0].shape[1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return forward(self.layers, np.atleast_2d(np.asarray(X, dtype=np.float64)))[0]

    def params(self) -> dict:
        return {"layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers]}

    @classmethod
    def from_params(cls, params, config):
        return cls([(np.array(l["W"]), np.array(l["b"])) for l in params["layers"]], config)


def train_mlp(train, cfg: TrainConfig) -> MLP:
    check_trainable(train)
    rng = np.random.default_rng(cfg.seed)
    sizes = [train.dim, *cfg.hidden, train.num_classes]
    params = init_params(sizes, rng)
    X, Y = train.X, one_hot(train.y, train.num_classes)
    n = len(X)
    bs = min(cfg.batch_size, n)
    # divergence is detected explicitly below, so silence numpy's overflow chatter
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                loss, grads = loss_and_grads(params, X[idx], Y[idx], cfg.l2)
                if not np.isfinite(loss):
                    raise TrainingError(f"MLP loss became non-finite at epoch {epoch}")
                params = [(W - cfg.learning_rate * gW, b - cfg.learning_rate * gb)
                          for (W, b), (gW, gb) in zip(params, grads)]
    return MLP(params, cfg)
