"""Exhaustive privacy-ratio and Monte-Carlo utility-tail checks for the samplers."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from nblend.defense.samplers import (
    ENUMERATION_CAP,
    em_log_probs,
    enumerate_subsets,
    subset_log_table,
)

UTILITY_RANGE = (-2.0, 0.0)


def privacy_ratio_audit(
    utilities: Sequence[float],
    substituted: tuple[int, float],
    m: int,
    epsilon: float,
    delta_u: float = 2.0,
    mode: str = "exact_em",
    cap: int = ENUMERATION_CAP,
) -> float:
    """Largest ``|ln P(I | S) - ln P(I | S')|`` over all m-subsets ``I``.

    ``S'`` equals ``S`` except that candidate ``substituted[0]`` takes utility
    ``substituted[1]``. Both utility vectors are clipped to the feasible range
    of the normalized domain first.
    """
    if math.isinf(epsilon):
        raise ValueError("the ratio audit needs a finite epsilon")
    u = np.clip(np.asarray(utilities, dtype=np.float64), *UTILITY_RANGE)
    k, new_u = substituted
    u2 = u.copy()
    u2[k] = np.clip(new_u, *UTILITY_RANGE)
    _, lp = subset_log_table(u, m, epsilon, delta_u, mode, cap)
    _, lp2 = subset_log_table(u2, m, epsilon, delta_u, mode, cap)
    return float(np.max(np.abs(lp - lp2)))


def tail_threshold(opt: float, n_subsets: int, epsilon: float, delta_u: float, t: float) -> float:
    return opt - (2.0 * delta_u / epsilon) * (math.log(n_subsets) + t)


def utility_tail_audit(
    utilities: Sequence[float],
    m: int,
    epsilon: float,
    delta_u: float,
    t: float,
    trials: int,
    rng: np.random.Generator,
    cap: int = ENUMERATION_CAP,
) -> float:
    """Observed frequency of ``U(I) <= OPT - (2 delta_u / eps)(ln |Omega| + t)``
    over ``trials`` exact-mechanism draws.

    For ``epsilon = inf`` the threshold is the limit from below, so only draws
    strictly worse than OPT count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    u = np.asarray(utilities, dtype=np.float64)
    subsets = enumerate_subsets(u.shape[0], m, cap)
    totals = u[subsets].sum(axis=1)
    opt = float(totals.max())
    if math.isinf(epsilon):
        # the mechanism collapses onto OPT
        return float(np.mean(np.full(trials, opt) < opt))
    c = tail_threshold(opt, len(subsets), epsilon, delta_u, t)
    probs = np.exp(em_log_probs(u, subsets, epsilon, delta_u))
    draws = rng.choice(len(subsets), size=trials, p=probs / probs.sum())
    return float(np.mean(totals[draws] <= c))
