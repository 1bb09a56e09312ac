"""Bagged CART ensemble with Gini splits and Laplace-smoothed leaves.

Trees grow until leaves are pure (or no split separates the remaining
points), so the ensemble memorizes its training set. With ``bootstrap=False``
every tree sees every training point and diversity comes from the random
feature subsets alone.
"""

from __future__ import annotations

import math

import numpy as np

from nblend.models.base import Classifier, TrainConfig, check_trainable


class Tree:
    """Flat array representation; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def leaf_proba(self, X: np.ndarray, alpha: float) -> np.ndarray:
        c = self.counts[self.leaves(X)]
        return (c + alpha) / (c.sum(axis=1, keepdims=True) + alpha * c.shape[1])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }


def _gini_best_split(x: np.ndarray, Y: np.ndarray):
    """Best threshold on one feature; returns (impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    cum = np.cumsum(Y[order], axis=0)[:-1]
    total = cum[-1] + Y[order[-1]]
    n = len(x)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    right = total - cum
    gl = 1.0 - np.sum(cum * cum, axis=1) / (nl * nl)
    gr = 1.0 - np.sum(right * right, axis=1) / (nr * nr)
    imp = (nl * gl + nr * gr) / n
    imp = np.where(valid, imp, np.inf)
    i = int(np.argmin(imp))
    thr = 0.5 * (xs[i] + xs[i + 1])
    if not thr < xs[i + 1]:
        thr = xs[i]
    return float(imp[i]), float(thr)


def _n_split_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d)))
    return max(1, min(d, int(max_features)))


def build_tree(X, y, num_classes, rng, max_depth=None, max_features=None) -> Tree:
    Y = np.zeros((len(y), num_classes))
    Y[np.arange(len(y)), y] = 1.0
    d = X.shape[1]
    k = _n_split_features(max_features, d)
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(Y[rows].sum(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if np.count_nonzero(counts[node]) <= 1:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        # random feature subset first, then the rest if none of them can split
        perm = rng.permutation(d)
        best = None
        for group in (perm[:k], perm[k:]):
            for f in group:
                res = _gini_best_split(X[rows, f], Y[rows])
                if res is not None and (best is None or res[0] < best[0]):
                    best = (res[0], res[1], int(f))
            if best is not None:
                break
        if best is None:
            continue
        _, thr, f = best
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(feature, threshold, left, right, np.array(counts).reshape(-1, num_classes))


class TreeEnsemble(Classifier):
    kind = "tree_ensemble"

    def __init__(self, trees: list[Tree], num_classes: int, config: TrainConfig):
        self.trees = trees
        self.num_classes = num_classes
        self.config = config

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros((len(X), self.num_classes))
        for t in self.trees:
            total += t.leaf_proba(X, self.config.leaf_alpha)
        return total / len(self.trees)

    def params(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_params(cls, params, config):
        trees = [Tree(**t) for t in params["trees"]]
        return cls(trees, trees[0].counts.shape[1], config)


def train_tree_ensemble(train, cfg: TrainConfig) -> TreeEnsemble:
    check_trainable(train)
    rng = np.random.default_rng(cfg.seed)
    n = len(train)
    trees = []
    for _ in range(cfg.n_trees):
        boot = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        trees.append(
            build_tree(train.X[boot], train.y[boot], train.num_classes, rng,
                       cfg.max_depth, cfg.max_features)
        )
    return TreeEnsemble(trees, train.num_classes, cfg)
