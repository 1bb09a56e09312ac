"""Shared classifier interface, training config and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Training could not produce a usable model (bad data or divergence)."""


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "logreg"
    seed: int = 0
    learning_rate: float = 0.5
    epochs: int = 500
    l2: float = 0.0
    hidden: tuple[int, ...] = (64, 32)
    batch_size: int = 32
    n_trees: int = 15
    max_depth: int | None = None
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True
    leaf_alpha: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("logreg", "tree_ensemble", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if self.n_trees < 1 or self.leaf_alpha <= 0:
            raise ValueError("n_trees must be >= 1 and leaf_alpha > 0")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or absent")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class Classifier:
    """A trained model mapping feature rows to confidence vectors.

    Subclasses implement :meth:`predict_proba` on a batch ``(n, d)`` and
    return ``(n, C)`` rows on the probability simplex.
    """

    kind: str = ""
    num_classes: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. lowest-index tie-break
        return np.argmax(self.predict_proba(X), axis=1)

    def params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_params(cls, params: dict, config: TrainConfig) -> "Classifier":
        raise NotImplementedError


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(y: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(y), num_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def check_trainable(ds, min_classes: int = 2) -> None:
    if len(ds) == 0:
        raise TrainingError("empty training set")
    if ds.num_classes < min_classes:
        raise TrainingError(f"training needs at least {min_classes} classes, got {ds.num_classes}")


def task_accuracy(model: Classifier, data) -> float:
    """Fraction of samples whose predicted label equals the ground truth."""
    if len(data) == 0:
        raise ValueError("task_accuracy needs a non-empty dataset")
    return float(np.mean(model.predict(data.X) == data.y))


def model_to_dict(model: Classifier) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "num_classes": model.num_classes,
        "config": model.config.to_dict(),
        "params": model.params(),
    }


def model_from_dict(doc: dict) -> Classifier:
    from nblend.models import REGISTRY

    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    cfg_d = dict(doc["config"])
    cfg_d["hidden"] = tuple(cfg_d.get("hidden", ()))
    cfg = TrainConfig(**cfg_d)
    return REGISTRY[doc["kind"]].from_params(doc["params"], cfg)


def save_model(model: Classifier, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> Classifier:
    return model_from_dict(json.loads(Path(path).read_text()))
