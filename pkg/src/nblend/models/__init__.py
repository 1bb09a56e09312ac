"""Target classifiers that emit confidence vectors."""

from nblend.models.base import (
    Classifier,
    TrainConfig,
    TrainingError,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    task_accuracy,
)
from nblend.models.logreg import LogisticRegression, train_logreg
from nblend.models.mlp import MLP, train_mlp
from nblend.models.tree import TreeEnsemble, train_tree_ensemble

REGISTRY = {
    "logreg": LogisticRegression,
    "tree_ensemble": TreeEnsemble,
    "mlp": MLP,
}

TRAINERS = {
    "logreg": train_logreg,
    "tree_ensemble": train_tree_ensemble,
    "mlp": train_mlp,
}


def train(train_set, cfg: TrainConfig) -> Classifier:
    return TRAINERS[cfg.kind](train_set, cfg)


__all__ = [
    "Classifier",
    "LogisticRegression",
    "MLP",
    "REGISTRY",
    "TRAINERS",
    "TrainConfig",
    "TrainingError",
    "TreeEnsemble",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "save_model",
    "task_accuracy",
    "train",
    "train_logreg",
    "train_mlp",
    "train_tree_ensemble",
]
