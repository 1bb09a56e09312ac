"""Neighbor scoring and the two m-subset samplers.

Both samplers work on per-candidate utilities ``u_i = -||x_i - q||_p``.
``gumbel_top_m`` perturbs logits with Gumbel noise and keeps the top ``m``;
``exact_em_sample`` enumerates every m-subset and draws one with probability
proportional to ``exp(eps * sum(u_I) / (2 * delta_u))``.
``subset_distribution`` gives the exact set-level law of either sampler.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

ENUMERATION_CAP = 200_000
GUMBEL_U_MIN = 1e-300
GUMBEL_U_MAX = 1.0 - 1e-16

MODES = ("gumbel", "exact_em")


class EnumerationCapError(ValueError):
    """The subset space is too large to enumerate; use gumbel mode instead."""


def utility_scores(q: np.ndarray, candidates: np.ndarray, p: float) -> np.ndarray:
    """Negative Lp distance from each candidate row to the query."""
    q = np.asarray(q, dtype=np.float64).ravel()
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if candidates.size and candidates.shape[1] != q.shape[0]:
        raise ValueError(
            f"dimension mismatch: query has {q.shape[0]} features, candidates {candidates.shape[1]}"
        )
    if candidates.shape[0] == 0:
        return np.zeros(0)
    return -np.linalg.norm(candidates - q, ord=p, axis=1)


def logits(utilities: Sequence[float], epsilon: float, delta_u: float = 2.0) -> np.ndarray:
    if delta_u <= 0:
        raise ValueError("delta_u must be positive")
    if math.isinf(epsilon):
        raise ValueError("logits are undefined for epsilon = inf; use the noiseless top-m path")
    return epsilon * np.asarray(utilities, dtype=np.float64) / (2.0 * delta_u)


def _top_m(scores: np.ndarray, m: int) -> np.ndarray:
    # stable sort on the negated score: ties go to the lowest index
    top = np.argsort(-scores, axis=-1, kind="stable")[..., :m]
    return np.sort(top, axis=-1)


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    u = np.clip(rng.random(shape), GUMBEL_U_MIN, GUMBEL_U_MAX)
    return -np.log(-np.log(u))


def gumbel_top_m(
    logits: Sequence[float],
    m: int,
    rng: np.random.Generator | None,
    size: int | None = None,
) -> np.ndarray:
    """Indices of the ``m`` largest ``logits + Gumbel(0, 1)`` scores, sorted ascending.

    ``rng=None`` suppresses the noise (the epsilon -> inf limit). With ``size``
    the draw is repeated and an array of shape ``(size, m)`` is returned.
    """
    phi = np.asarray(logits, dtype=np.float64)
    if m > phi.shape[0]:
        raise ValueError(f"cannot select {m} of {phi.shape[0]} candidates")
    if m < 0:
        raise ValueError("m must be non-negative")
    if rng is None:
        top = _top_m(phi, m)
        return top if size is None else np.tile(top, (size, 1))
    shape = phi.shape if size is None else (size, phi.shape[0])
    return _top_m(phi + gumbel_noise(rng, shape), m)


def _check_cap(n: int, m: int, cap: int, perms: bool = False) -> int:
    if m > n:
        raise ValueError(f"cannot select {m} of {n} candidates")
    k = math.comb(n, m)
    work = k * (math.factorial(m) if perms else 1)
    if work > cap:
        raise EnumerationCapError(
            f"enumerating C({n}, {m}){' * m!' if perms else ''} = {work} exceeds cap {cap}"
        )
    return k


def enumerate_subsets(n: int, m: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All m-subsets of ``range(n)`` in lexicographic order, shape (C(n, m), m)."""
    _check_cap(n, m, cap)
    subsets = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), m)),
        dtype=np.int64,
        count=math.comb(n, m) * m,
    )
    return subsets.reshape(-1, m)


def em_log_probs(
    utilities: Sequence[float],
    subsets: np.ndarray,
    epsilon: float,
    delta_u: float = 2.0,
) -> np.ndarray:
    u = np.asarray(utilities, dtype=np.float64)
    logw = logits(u[subsets].sum(axis=1), epsilon, delta_u)
    return logw - logsumexp(logw)


def plackett_luce_log_probs(phi: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Log-probability that sequential softmax sampling without replacement
    ends with each given set, summed over all orderings of the set."""
    m = subsets.shape[1]
    if m == 0:
        return np.zeros(len(subsets))
    w = np.exp(phi - phi.max())
    total = w.sum()
    perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    ordered = w[subsets[:, perms]]  # (K, m!, m)
    taken = np.cumsum(ordered, axis=-1) - ordered
    log_seq = np.sum(np.log(ordered) - np.log(total - taken), axis=-1)
    return logsumexp(log_seq, axis=1)


def subset_log_table(
    utilities: Sequence[float],
    m: int,
    epsilon: float,
    delta_u: float = 2.0,
    mode: str = "exact_em",
    cap: int = ENUMERATION_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """``(subsets, log_probs)`` for the chosen sampler, subsets lexicographic."""
    if mode not in MODES:
        raise ValueError(f"unknown sampler mode {mode!r}")
    u = np.asarray(utilities, dtype=np.float64)
    n = u.shape[0]
    _check_cap(n, m, cap, perms=(mode == "gumbel"))
    subsets = enumerate_subsets(n, m, cap)
    if mode == "exact_em":
        return subsets, em_log_probs(u, subsets, epsilon, delta_u)
    return subsets, plackett_luce_log_probs(logits(u, epsilon, delta_u), subsets)


def subset_distribution(
    utilities: Sequence[float],
    m: int,
    epsilon: float,
    delta_u: float = 2.0,
    mode: str = "exact_em",
    cap: int = ENUMERATION_CAP,
) -> dict[tuple[int, ...], float]:
    """Exact probability of every m-subset under the given sampler."""
    subsets, logp = subset_log_table(utilities, m, epsilon, delta_u, mode, cap)
    return {tuple(int(i) for i in s): float(p) for s, p in zip(subsets, np.exp(logp))}


def exact_em_sample(
    utilities: Sequence[float],
    m: int,
    epsilon: float,
    delta_u: float,
    rng: np.random.Generator,
    cap: int = ENUMERATION_CAP,
) -> np.ndarray:
    """One m-subset drawn from the set-level exponential mechanism."""
    u = np.asarray(utilities, dtype=np.float64)
    if math.isinf(epsilon):
        _check_cap(u.shape[0], m, cap)
        return _top_m(u, m)
    subsets = enumerate_subsets(u.shape[0], m, cap)
    probs = np.exp(em_log_probs(u, subsets, epsilon, delta_u))
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return subsets[min(k, len(subsets) - 1)].copy()


def select_neighbors(
    utilities: np.ndarray,
    m: int,
    epsilon: float,
    delta_u: float,
    mode: str,
    rng: np.random.Generator,
) -> np.ndarray:
    """Positions (into ``utilities``) of the sampled neighborhood."""
    if math.isinf(epsilon):
        return _top_m(np.asarray(utilities, dtype=np.float64), m)
    if mode == "gumbel":
        return gumbel_top_m(logits(utilities, epsilon, delta_u), m, rng)
    if mode == "exact_em":
        return exact_em_sample(utilities, m, epsilon, delta_u, rng)
    raise ValueError(f"unknown sampler mode {mode!r}")


def subset_keys(selections: np.ndarray) -> np.ndarray:
    """Encode rows of selected indices as integer bitmasks (for counting)."""
    return np.sum(np.left_shift(np.int64(1), selections), axis=-1)
