"""Neighborhood Blending: replace a query's confidence vector with the mean
confidence vector of privately sampled training neighbors that share its
predicted label."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nblend.data import parse_norm_order
from nblend.defense.samplers import MODES, select_neighbors, utility_scores


@dataclass(frozen=True)
class DefenseConfig:
    """Parameters of the blending defense.

    ``m=None`` picks the neighbor count from the candidate index
    (see :func:`default_m`). ``epsilon`` may be ``math.inf`` for noiseless
    nearest-neighbor selection.
    """

    m: int | None = None
    epsilon: float = 1.0
    p: float = 2.0
    delta_u: float = 2.0
    sampler_mode: str = "gumbel"
    seed: int = 0

    def __post_init__(self):
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not self.delta_u > 0:
            raise ValueError("delta_u must be > 0")
        if self.sampler_mode not in MODES:
            raise ValueError(f"sampler_mode must be one of {MODES}")
        object.__setattr__(self, "p", parse_norm_order(self.p))

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "epsilon": "inf" if math.isinf(self.epsilon) else self.epsilon,
            "p": "inf" if math.isinf(self.p) else self.p,
            "delta_u": self.delta_u,
            "sampler_mode": self.sampler_mode,
            "seed": self.seed,
        }


class CandidateIndex:
    """Training set bucketed by the model's own predicted label.

    Confidence vectors of the training points are computed once here.
    """

    def __init__(self, X: np.ndarray, probs: np.ndarray):
        self.X = np.asarray(X, dtype=np.float64)
        self.probs = np.asarray(probs, dtype=np.float64)
        self.labels = np.argmax(self.probs, axis=1)
        self.num_classes = self.probs.shape[1]
        self.buckets = {
            c: np.flatnonzero(self.labels == c) for c in range(self.num_classes)
        }
        for a in (self.X, self.probs, self.labels):
            a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.X)

    def bucket_sizes(self) -> np.ndarray:
        return np.array([len(self.buckets[c]) for c in range(self.num_classes)])


def build_candidate_index(model, train) -> CandidateIndex:
    X = train.X if hasattr(train, "X") else np.asarray(train)
    if len(X) == 0:
        raise ValueError("candidate index needs a non-empty training set")
    return CandidateIndex(X, model.predict_proba(X))


def default_m(index: CandidateIndex, dense_threshold: int = 50) -> int:
    """5 neighbors when every non-empty bucket is dense, else 3."""
    sizes = index.bucket_sizes()
    sizes = sizes[sizes > 0]
    return 5 if sizes.size and sizes.min() >= dense_threshold else 3


@dataclass(frozen=True)
class NeighborSelection:
    indices: np.ndarray  # training-set indices
    utilities: np.ndarray
    mode: str


@dataclass(frozen=True)
class SmoothedOutput:
    original: np.ndarray
    smoothed: np.ndarray
    predicted_label: int
    selection: NeighborSelection | None
    fallback: bool = False


def query_rng(seed: int, ordinal: int) -> np.random.Generator:
    """Independent stream per query so batch and one-off calls agree."""
    return np.random.default_rng([int(seed), int(ordinal)])


def resolve_m(cfg: DefenseConfig, index: CandidateIndex) -> int:
    return cfg.m if cfg.m is not None else default_m(index)


def blend(
    original: np.ndarray,
    q: np.ndarray,
    index: CandidateIndex,
    cfg: DefenseConfig,
    rng: np.random.Generator,
    m: int | None = None,
) -> SmoothedOutput:
    """Smooth a confidence vector already computed for query ``q``."""
    m = resolve_m(cfg, index) if m is None else m
    label = int(np.argmax(original))
    bucket = index.buckets.get(label, np.zeros(0, dtype=np.int64))
    if bucket.size == 0:
        return SmoothedOutput(original, original.copy(), label, None, fallback=True)
    u = utility_scores(q, index.X[bucket], cfg.p)
    if bucket.size <= m:
        chosen = np.arange(bucket.size)
        fallback = bucket.size < m
    else:
        chosen = select_neighbors(u, m, cfg.epsilon, cfg.delta_u, cfg.sampler_mode, rng)
        fallback = False
    picked = bucket[chosen]
    smoothed = index.probs[picked].mean(axis=0)
    selection = NeighborSelection(picked, u[chosen], cfg.sampler_mode)
    return SmoothedOutput(original, smoothed, label, selection, fallback)


def defend(q, model, index: CandidateIndex, cfg: DefenseConfig, rng) -> SmoothedOutput:
    """Run the full defense for one (normalized) query vector."""
    q = np.asarray(q, dtype=np.float64).ravel()
    original = model.predict_proba(q[None, :])[0]
    return blend(original, q, index, cfg, rng)


@dataclass
class BatchResult:
    original: np.ndarray
    smoothed: np.ndarray
    predicted: np.ndarray
    fallback: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def defend_batch(Q, model, index: CandidateIndex, cfg: DefenseConfig, stream: int = 0) -> BatchResult:
    """Defend every row of ``Q``; query ``i`` uses stream ``(seed, stream, i)``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    originals = model.predict_proba(Q)
    m = resolve_m(cfg, index)
    smoothed = np.empty_like(originals)
    fallback = np.zeros(len(Q), dtype=bool)
    stream_seed = int(np.random.SeedSequence([int(cfg.seed), int(stream)]).generate_state(1)[0])
    for i, q in enumerate(Q):
        out = blend(originals[i], q, index, cfg, query_rng(stream_seed, i), m)
        smoothed[i] = out.smoothed
        fallback[i] = out.fallback
    return BatchResult(originals, smoothed, np.argmax(originals, axis=1), fallback)
