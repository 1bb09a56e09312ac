"""Membership inference attacks: a shadow-model attack and three metric attacks
with class-dependent thresholds."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from nblend.data import Dataset
from nblend.defense import DefenseConfig, build_candidate_index, defend_batch
from nblend.models import TrainConfig, train
from nblend.models.base import softmax
from nblend.models.logreg import fit_softmax

PROB_CLAMP = 1e-12


class AttackError(ValueError):
    pass


# -- metric scores -----------------------------------------------------------

def _check_labels(probs: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[-1]):
        raise AttackError(f"label out of range for {probs.shape[-1]} classes")
    return labels


def confidence_score(probs, true_label) -> np.ndarray | float:
    """Probability assigned to the true label."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(probs, true_label)
    if probs.ndim == 1:
        return float(probs[int(labels)])
    return probs[np.arange(len(probs)), labels]


def entropy_score(probs) -> np.ndarray | float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    probs = np.asarray(probs, dtype=np.float64)
    safe = np.where(probs > 0, probs, 1.0)
    h = -np.sum(probs * np.log(safe), axis=-1)
    return float(h) if probs.ndim == 1 else h


def modified_entropy_score(probs, true_label) -> np.ndarray | float:
    """-(1 - p_y) ln p_y - sum_{i != y} p_i ln(1 - p_i), probabilities clamped."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(probs, true_label)
    single = probs.ndim == 1
    P = np.clip(np.atleast_2d(probs), PROB_CLAMP, 1.0 - PROB_CLAMP)
    rows = np.arange(len(P))
    labels = np.broadcast_to(labels, (len(P),))
    py = P[rows, labels]
    wrong = P * np.log(1.0 - P)
    wrong[rows, labels] = 0.0
    score = -(1.0 - py) * np.log(py) - wrong.sum(axis=1)
    return float(score[0]) if single else score


# -- thresholds --------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdTable:
    thresholds: np.ndarray  # one per class
    direction: str  # "ge": member if score >= t; "le": member if score <= t

    def is_member(self, scores: np.ndarray, keys: np.ndarray) -> np.ndarray:
        t = self.thresholds[np.asarray(keys, dtype=np.int64)]
        return scores >= t if self.direction == "ge" else scores <= t


def _best_threshold(scores: np.ndarray, member: np.ndarray, direction: str) -> tuple[float, float]:
    """Sweep midpoints of sorted unique scores (plus one sentinel on each side)
    and return ``(threshold, balanced accuracy)``; ties keep the smaller threshold."""
    uniq = np.unique(scores)
    cands = np.concatenate([[uniq[0] - 1.0], 0.5 * (uniq[:-1] + uniq[1:]), [uniq[-1] + 1.0]])
    pos, neg = scores[member], scores[~member]
    if direction == "ge":
        tpr = (pos[None, :] >= cands[:, None]).mean(axis=1)
        tnr = (neg[None, :] < cands[:, None]).mean(axis=1)
    else:
        tpr = (pos[None, :] <= cands[:, None]).mean(axis=1)
        tnr = (neg[None, :] > cands[:, None]).mean(axis=1)
    bal = 0.5 * (tpr + tnr)
    i = int(np.argmax(bal))  # candidates ascend, so first max is the smallest
    return float(cands[i]), float(bal[i])


def fit_thresholds(
    scores,
    keys,
    membership,
    direction: str,
    num_classes: int,
    per_class: bool = True,
) -> ThresholdTable:
    """Per-class thresholds maximizing balanced accuracy on shadow data.

    Classes lacking either members or non-members fall back to the global
    threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.int64)
    member = np.asarray(membership, dtype=bool)
    if scores.size == 0:
        raise AttackError("no shadow samples to fit thresholds on")
    if direction not in ("ge", "le"):
        raise ValueError("direction must be 'ge' or 'le'")
    if member.all() or not member.any():
        raise AttackError("shadow samples need both members and non-members")
    global_t, _ = _best_threshold(scores, member, direction)
    table = np.full(num_classes, global_t)
    if per_class:
        for c in range(num_classes):
            sel = keys == c
            if member[sel].any() and (~member[sel]).any():
                table[c], _ = _best_threshold(scores[sel], member[sel], direction)
    return ThresholdTable(table, direction)


# -- attack samples ----------------------------------------------------------

@dataclass(frozen=True)
class AttackSamples:
    """Confidence vectors with true labels and ground-truth membership."""

    probs: np.ndarray
    true_labels: np.ndarray
    membership: np.ndarray

    def __len__(self):
        return len(self.probs)

    @classmethod
    def concat(cls, parts: list["AttackSamples"]) -> "AttackSamples":
        return cls(
            np.vstack([p.probs for p in parts]),
            np.concatenate([p.true_labels for p in parts]),
            np.concatenate([p.membership for p in parts]),
        )


class Attack(Protocol):
    name: str

    def predict_membership(self, probs: np.ndarray, true_labels: np.ndarray) -> np.ndarray: ...

    def score(self, probs: np.ndarray, true_labels: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class MetricAttackSpec:
    name: str
    score_fn: Callable
    direction: str
    key: str  # which label indexes the threshold table: "true" or "predicted"
    uses_label: bool = True

    def score(self, probs, true_labels):
        if self.uses_label:
            return self.score_fn(probs, true_labels)
        return self.score_fn(probs)

    def keys(self, probs, true_labels):
        return true_labels if self.key == "true" else np.argmax(probs, axis=1)


METRIC_ATTACKS = {
    "confidence": MetricAttackSpec("confidence", confidence_score, "ge", "true"),
    "entropy": MetricAttackSpec("entropy", entropy_score, "le", "predicted", uses_label=False),
    "modified_entropy": MetricAttackSpec("modified_entropy", modified_entropy_score, "le", "true"),
}


@dataclass(frozen=True)
class MetricAttack:
    spec: MetricAttackSpec
    table: ThresholdTable

    @property
    def name(self) -> str:
        return self.spec.name

    def score(self, probs, true_labels):
        return self.spec.score(np.atleast_2d(probs), np.atleast_1d(true_labels))

    def predict_membership(self, probs, true_labels):
        probs = np.atleast_2d(probs)
        true_labels = np.atleast_1d(true_labels)
        return self.table.is_member(self.score(probs, true_labels),
                                    self.spec.keys(probs, true_labels))


def fit_metric_attack(kind: str, shadow: AttackSamples, per_class: bool = True) -> MetricAttack:
    spec = METRIC_ATTACKS[kind]
    scores = spec.score(shadow.probs, shadow.true_labels)
    keys = spec.keys(shadow.probs, shadow.true_labels)
    table = fit_thresholds(scores, keys, shadow.membership, spec.direction,
                           shadow.probs.shape[1], per_class)
    return MetricAttack(spec, table)


# -- shadow-model attack -----------------------------------------------------

@dataclass(frozen=True)
class ShadowEnsembleConfig:
    num_shadow_models: int = 4
    model: TrainConfig = field(default_factory=TrainConfig)
    per_class: bool = False
    seed: int = 0
    attack_learning_rate: float = 0.5
    attack_epochs: int = 1000
    attack_l2: float = 1e-4

    def __post_init__(self):
        if self.num_shadow_models < 1:
            raise ValueError("num_shadow_models must be >= 1")


def _stratified_halves(labels: np.ndarray, rng: np.random.Generator):
    inside, outside = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        cut = (len(idx) + 1) // 2
        inside.append(idx[:cut])
        outside.append(idx[cut:])
    return np.sort(np.concatenate(inside)), np.sort(np.concatenate(outside))


def shadow_samples(
    shadow_pool: Dataset,
    cfg: ShadowEnsembleConfig,
    defense: DefenseConfig | None = None,
) -> AttackSamples:
    """Train the shadow models and label their outputs with membership.

    Each shadow model takes a fresh stratified half of the pool as its
    training set; the other half supplies non-members. With ``defense`` the
    shadow outputs go through the same blending defense (adaptive attacker).
    """
    if len(shadow_pool) < 4:
        raise AttackError(f"shadow pool of {len(shadow_pool)} samples is too small")
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.integers(0, 2**31 - 1, size=(cfg.num_shadow_models, 2))
    parts = []
    for j in range(cfg.num_shadow_models):
        split_rng = np.random.default_rng(int(seeds[j, 0]))
        ins, outs = _stratified_halves(shadow_pool.y, split_rng)
        if len(outs) == 0:
            raise AttackError("shadow pool too small for a held-out half")
        member_set, out_set = shadow_pool.subset(ins), shadow_pool.subset(outs)
        if len(np.unique(member_set.y)) < 2:
            raise AttackError("shadow training split has fewer than two classes")
        model = train(member_set, replace(cfg.model, seed=int(seeds[j, 1])))
        Q = np.vstack([member_set.X, out_set.X])
        if defense is None:
            probs = model.predict_proba(Q)
        else:
            index = build_candidate_index(model, member_set)
            shadow_def = replace(defense, seed=int(seeds[j, 1]))
            probs = defend_batch(Q, model, index, shadow_def).smoothed
        labels = np.concatenate([member_set.y, out_set.y])
        membership = np.concatenate([np.ones(len(ins), bool), np.zeros(len(outs), bool)])
        parts.append(AttackSamples(probs, labels, membership))
    return AttackSamples.concat(parts)


def attack_features(probs: np.ndarray, true_labels: np.ndarray, with_label: bool) -> np.ndarray:
    """Confidence vector sorted descending, optionally with a one-hot true label."""
    probs = np.atleast_2d(probs)
    feats = -np.sort(-probs, axis=1)
    if with_label:
        onehot = np.zeros_like(probs)
        onehot[np.arange(len(probs)), np.asarray(true_labels)] = 1.0
        feats = np.hstack([feats, onehot])
    return feats


@dataclass
class _BinaryLogit:
    mean: np.ndarray
    scale: np.ndarray
    W: np.ndarray
    b: np.ndarray

    def prob(self, F: np.ndarray) -> np.ndarray:
        Z = (F - self.mean) / self.scale
        return softmax(Z @ self.W + self.b)[:, 1]


def _fit_binary(F, member, cfg: ShadowEnsembleConfig) -> _BinaryLogit:
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    W, b = fit_softmax((F - mean) / scale, member.astype(np.int64), 2,
                       cfg.attack_learning_rate, cfg.attack_epochs, cfg.attack_l2)
    return _BinaryLogit(mean, scale, W, b)


@dataclass
class ShadowAttack:
    """Logistic-regression attack model fit on shadow-model outputs."""

    cfg: ShadowEnsembleConfig
    num_classes: int
    global_model: _BinaryLogit
    per_class_models: dict[int, _BinaryLogit] = field(default_factory=dict)
    train_accuracy: float = float("nan")
    name: str = "shadow"

    def score(self, probs, true_labels) -> np.ndarray:
        probs = np.atleast_2d(probs)
        true_labels = np.atleast_1d(np.asarray(true_labels, dtype=np.int64))
        with_label = not self.cfg.per_class
        F = attack_features(probs, true_labels, with_label)
        out = self.global_model.prob(F)
        for c, mdl in self.per_class_models.items():
            sel = true_labels == c
            if sel.any():
                out[sel] = mdl.prob(F[sel])
        return out

    def predict_membership(self, probs, true_labels) -> np.ndarray:
        return self.score(probs, true_labels) >= 0.5


def fit_shadow_attack_from_samples(samples: AttackSamples, cfg: ShadowEnsembleConfig) -> ShadowAttack:
    if len(samples) == 0:
        raise AttackError("no shadow samples")
    member = samples.membership
    if member.all() or not member.any():
        raise AttackError("shadow samples need both members and non-members")
    C = samples.probs.shape[1]
    F = attack_features(samples.probs, samples.true_labels, not cfg.per_class)
    attack = ShadowAttack(cfg, C, _fit_binary(F, member, cfg))
    if cfg.per_class:
        for c in range(C):
            sel = samples.true_labels == c
            if member[sel].any() and (~member[sel]).any():
                attack.per_class_models[c] = _fit_binary(F[sel], member[sel], cfg)
    pred = attack.predict_membership(samples.probs, samples.true_labels)
    attack.train_accuracy = float(np.mean(pred == member))
    return attack


def fit_shadow_attack(
    shadow_pool: Dataset,
    cfg: ShadowEnsembleConfig,
    defense: DefenseConfig | None = None,
) -> ShadowAttack:
    return fit_shadow_attack_from_samples(shadow_samples(shadow_pool, cfg, defense), cfg)


def shadow_attack_score(attack: ShadowAttack, confidence, true_label) -> float:
    """Membership probability for a single confidence vector."""
    return float(attack.score(np.atleast_2d(confidence), [int(true_label)])[0])


# -- evaluation --------------------------------------------------------------

@dataclass(frozen=True)
class AttackReport:
    attack: str
    accuracy: float
    n_eval: int
    member_score_mean: float
    nonmember_score_mean: float

    def to_row(self, **extra) -> dict:
        return {**extra, "attack": self.attack, "accuracy": self.accuracy, "n_eval": self.n_eval}


def evaluate_attack(attack: Attack, members: AttackSamples, nonmembers: AttackSamples) -> AttackReport:
    """Accuracy of membership calls on a balanced member / non-member set."""
    if len(members) == 0 or len(nonmembers) == 0:
        raise AttackError("evaluation sets must be non-empty")
    if len(members) != len(nonmembers):
        raise AttackError(f"unbalanced evaluation: {len(members)} vs {len(nonmembers)}")
    hit_in = attack.predict_membership(members.probs, members.true_labels)
    hit_out = attack.predict_membership(nonmembers.probs, nonmembers.true_labels)
    correct = np.count_nonzero(hit_in) + np.count_nonzero(~hit_out)
    total = len(members) + len(nonmembers)
    return AttackReport(
        attack=getattr(attack, "name", type(attack).__name__),
        accuracy=correct / total,
        n_eval=total,
        member_score_mean=float(np.mean(attack.score(members.probs, members.true_labels))),
        nonmember_score_mean=float(np.mean(attack.score(nonmembers.probs, nonmembers.true_labels))),
    )
