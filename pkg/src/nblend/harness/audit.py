"""Randomized sampler audits: ratio bound, utility tail bound, and
Gumbel-vs-Plackett-Luce set equivalence."""

from __future__ import annotations

import math

import numpy as np

from nblend.defense import privacy_ratio_audit, subset_keys, utility_tail_audit
from nblend.defense.samplers import gumbel_top_m, logits, subset_log_table
from nblend.harness.config import AuditConfig
from nblend.harness.seeds import derive_seed


def random_instance(rng: np.random.Generator, cfg: AuditConfig) -> tuple[np.ndarray, int]:
    n = int(rng.integers(cfg.sizes[0], cfg.sizes[1] + 1))
    m = int(rng.integers(cfg.m[0], min(cfg.m[1], n) + 1))
    return rng.uniform(-2.0, 0.0, size=n), m


def tail_bound(t: float, trials: int) -> float:
    """e^-t plus three binomial standard errors."""
    q = math.exp(-t)
    return q + 3.0 * math.sqrt(q * (1.0 - q) / trials)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def gumbel_tv(u: np.ndarray, m: int, epsilon: float, delta_u: float, draws: int,
              rng: np.random.Generator) -> float:
    subsets, logp = subset_log_table(u, m, epsilon, delta_u, "gumbel")
    picks = gumbel_top_m(logits(u, epsilon, delta_u), m, rng, size=draws)
    keys, counts = np.unique(subset_keys(picks), return_counts=True)
    freq = dict(zip(keys.tolist(), (counts / draws).tolist()))
    emp = np.array([freq.get(int(k), 0.0) for k in subset_keys(subsets)])
    return total_variation(emp, np.exp(logp))


def sampler_audit(cfg: AuditConfig) -> dict:
    """Run every audit family; returns a JSON-ready document with an ``ok`` flag."""
    ratio_records, gumbel_records, tail_records, equiv_records, single_records = [], [], [], [], []

    rng = np.random.default_rng(derive_seed(cfg.seed, "ratio"))
    for i in range(cfg.ratio.instances):
        u, m = random_instance(rng, cfg)
        k = int(rng.integers(len(u)))
        new_u = float(rng.uniform(-2.0, 0.0))
        for eps in cfg.epsilons:
            r = privacy_ratio_audit(u, (k, new_u), m, eps, cfg.delta_u, "exact_em")
            ratio_records.append({
                "instance": i, "mode": "exact_em", "epsilon": eps, "m": m, "size": len(u),
                "max_ratio": r, "bound": eps, "pass": bool(r <= eps + cfg.ratio_tolerance),
            })
            g = privacy_ratio_audit(u, (k, new_u), m, eps, cfg.delta_u, "gumbel")
            gumbel_records.append({
                "instance": i, "mode": "gumbel", "epsilon": eps, "m": m, "size": len(u),
                "max_ratio": g, "bound": eps, "pass": None,
            })

    rng = np.random.default_rng(derive_seed(cfg.seed, "tail"))
    for i in range(cfg.tail.instances):
        u, m = random_instance(rng, cfg)
        for eps in cfg.epsilons:
            for t in cfg.tail.t:
                obs = utility_tail_audit(u, m, eps, cfg.delta_u, t, cfg.tail.trials, rng)
                bound = tail_bound(t, cfg.tail.trials)
                tail_records.append({
                    "instance": i, "epsilon": eps, "m": m, "size": len(u), "t": t,
                    "trials": cfg.tail.trials, "observed": obs, "bound": bound,
                    "pass": bool(obs <= bound),
                })

    rng = np.random.default_rng(derive_seed(cfg.seed, "equivalence"))
    for i in range(cfg.equivalence.instances):
        u, m = random_instance(rng, cfg)
        eps = float(cfg.epsilons[i % len(cfg.epsilons)])
        tv = gumbel_tv(u, m, eps, cfg.delta_u, cfg.equivalence.draws, rng)
        equiv_records.append({
            "instance": i, "epsilon": eps, "m": m, "size": len(u),
            "draws": cfg.equivalence.draws, "tv": tv, "bound": cfg.equivalence.tv_max,
            "pass": bool(tv <= cfg.equivalence.tv_max),
        })
        _, lp_g = subset_log_table(u, 1, eps, cfg.delta_u, "gumbel")
        _, lp_e = subset_log_table(u, 1, eps, cfg.delta_u, "exact_em")
        diff = float(np.max(np.abs(np.exp(lp_g) - np.exp(lp_e))))
        single_records.append({"instance": i, "epsilon": eps, "size": len(u),
                               "max_abs_diff": diff, "pass": bool(diff <= 1e-12)})

    checked = ratio_records + tail_records + equiv_records + single_records
    return {
        "seed": cfg.seed,
        "ok": all(r["pass"] for r in checked),
        "summary": {
            "ratio_exact_em_pass_rate": _rate(ratio_records),
            "ratio_exact_em_max_excess": max((r["max_ratio"] - r["bound"] for r in ratio_records),
                                      default=None),
            "ratio_gumbel_max_excess": max((r["max_ratio"] - r["bound"] for r in gumbel_records),
                                           default=None),
            "tail_pass_rate": _rate(tail_records),
            "equivalence_pass_rate": _rate(equiv_records),
            "equivalence_max_tv": max((r["tv"] for r in equiv_records), default=None),
            "single_draw_pass_rate": _rate(single_records),
        },
        "ratio": ratio_records,
        "ratio_gumbel_diagnostic": gumbel_records,
        "tail": tail_records,
        "equivalence": equiv_records,
        "single_draw": single_records,
    }


def _rate(records) -> float | None:
    if not records:
        return None
    return sum(r["pass"] for r in records) / len(records)
