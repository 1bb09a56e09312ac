"""Neighborhood Blending defense, its samplers, and sampler audits."""

from nblend.defense.audit import privacy_ratio_audit, tail_threshold, utility_tail_audit
from nblend.defense.blend import (
    BatchResult,
    CandidateIndex,
    DefenseConfig,
    NeighborSelection,
    SmoothedOutput,
    blend,
    build_candidate_index,
    default_m,
    defend,
    defend_batch,
    query_rng,
)
from nblend.defense.samplers import (
    ENUMERATION_CAP,
    EnumerationCapError,
    enumerate_subsets,
    exact_em_sample,
    gumbel_top_m,
    logits,
    select_neighbors,
    subset_distribution,
    subset_keys,
    subset_log_table,
    utility_scores,
)

__all__ = [
    "BatchResult",
    "CandidateIndex",
    "DefenseConfig",
    "ENUMERATION_CAP",
    "EnumerationCapError",
    "NeighborSelection",
    "SmoothedOutput",
    "blend",
    "build_candidate_index",
    "default_m",
    "defend",
    "defend_batch",
    "enumerate_subsets",
    "exact_em_sample",
    "gumbel_top_m",
    "logits",
    "privacy_ratio_audit",
    "query_rng",
    "select_neighbors",
    "subset_distribution",
    "subset_keys",
    "subset_log_table",
    "tail_threshold",
    "utility_scores",
    "utility_tail_audit",
]
