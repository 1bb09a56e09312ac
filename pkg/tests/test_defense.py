import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_em_probs, brute_plackett_luce, multinomial_3sigma
from nblend.data import synth_blobs
from nblend.defense import (
    CandidateIndex,
    DefenseConfig,
    EnumerationCapError,
    blend,
    build_candidate_index,
    default_m,
    defend,
    defend_batch,
    privacy_ratio_audit,
    query_rng,
    subset_keys,
    utility_tail_audit,
)
from nblend.defense.samplers import (
    enumerate_subsets,
    exact_em_sample,
    gumbel_top_m,
    logits,
    subset_distribution,
    utility_scores,
)
from nblend.harness.audit import gumbel_tv, tail_bound
from nblend.models import TrainConfig, train

utilities = st.lists(st.floats(-2.0, 0.0), min_size=1, max_size=6)


class Fixed:
    """Stub model returning preset confidence vectors row by row."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, float)
        self.num_classes = self.probs.shape[1]

    def predict_proba(self, X):
        return self.probs[: len(X)]


# -- utility and logits ------------------------------------------------------

def test_utility_examples():
    assert utility_scores(np.zeros(2), np.array([[0.0, 0.0]]), 2)[0] == 0.0
    assert utility_scores(np.zeros(2), np.array([[0.3, 0.4]]), 2)[0] == pytest.approx(-0.5)
    assert utility_scores(np.zeros(2), np.array([[0.25, 0.25]]), 1)[0] == pytest.approx(-0.5)


def test_logits_examples():
    assert logits([-0.5], 1.0, 2.0)[0] == pytest.approx(-0.125)
    np.testing.assert_array_equal(logits([-0.3, -1.9], 0.0), [0.0, 0.0])


@given(utilities, st.floats(-5, 5), st.floats(0.01, 10))
def test_logit_shift_leaves_softmax_unchanged(u, shift, eps):
    a = logits(u, eps)
    b = logits(np.asarray(u) + shift, eps)
    sa, sb = np.exp(a - a.max()), np.exp(b - b.max())
    np.testing.assert_allclose(sa / sa.sum(), sb / sb.sum(), atol=1e-12)


# -- gumbel top-m ------------------------------------------------------------

@given(utilities, st.integers(0, 2**32 - 1))
def test_full_selection(u, seed):
    pick = gumbel_top_m(logits(u, 1.0), len(u), np.random.default_rng(seed))
    assert pick.tolist() == list(range(len(u)))


def test_noiseless_limit_is_nearest():
    u = np.array([-0.9, -0.1, -0.5, -0.2])
    assert gumbel_top_m(logits(u, 1.0), 2, None).tolist() == [1, 3]


def test_uniform_single_draw():
    n = 100_000
    picks = gumbel_top_m(np.zeros(4), 1, np.random.default_rng(0), size=n)[:, 0]
    freq = np.bincount(picks, minlength=4) / n
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_gumbel_matches_plackett_luce_example():
    u = np.array([0.0, -0.5, -1.0, -1.5])
    assert gumbel_tv(u, 2, 4.0, 2.0, 200_000, np.random.default_rng(1)) <= 0.01


# -- exact distributions -----------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(utilities, st.integers(1, 3), st.floats(0.0, 8.0))
def test_exact_tables_match_brute_force(u, m, eps):
    m = min(m, len(u))
    em = subset_distribution(u, m, eps, mode="exact_em")
    pl = subset_distribution(u, m, eps, mode="gumbel")
    for table, ref in ((em, brute_em_probs(u, m, eps)), (pl, brute_plackett_luce(u, m, eps))):
        assert table.keys() == ref.keys()
        for k in ref:
            assert table[k] == pytest.approx(ref[k], abs=1e-12)


def test_two_term_softmax():
    dist = subset_distribution([0.0, -2.0], 1, 2.0, 2.0)
    assert dist[(0,)] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
    assert dist[(0,)] == pytest.approx(0.7311, abs=1e-4)


@given(st.integers(1, 6), st.floats(-2, 0))
def test_single_draw_and_symmetry(n, c):
    u = np.full(n, c)
    for mode in ("exact_em", "gumbel"):
        for m in range(1, min(n, 3) + 1):
            d = subset_distribution(u, m, 1.5, mode=mode)
            np.testing.assert_allclose(list(d.values()), 1 / math.comb(n, m), atol=1e-12)


@given(utilities, st.floats(0, 10))
def test_m1_modes_agree(u, eps):
    a = subset_distribution(u, 1, eps, mode="exact_em")
    b = subset_distribution(u, 1, eps, mode="gumbel")
    for k in a:
        assert abs(a[k] - b[k]) <= 1e-12


def test_full_set_is_certain():
    assert subset_distribution([-0.1, -1.2, -0.3], 3, 1.0) == {(0, 1, 2): pytest.approx(1.0)}


def test_zero_epsilon_em_is_uniform():
    u = np.array([-0.1, -1.9, -0.7, -0.4, -1.2])
    rng = np.random.default_rng(4)
    n = 20_000
    draws = np.array([exact_em_sample(u, 2, 0.0, 2.0, rng) for _ in range(n)])
    subsets = enumerate_subsets(5, 2)
    keys, counts = np.unique(subset_keys(draws), return_counts=True)
    lookup = dict(zip(keys.tolist(), counts.tolist()))
    observed = [lookup.get(int(k), 0) for k in subset_keys(subsets)]
    assert multinomial_3sigma(observed, np.full(10, 0.1), n)


def test_exact_em_inf_is_top_m():
    u = [-0.4, -0.05, -1.0, -0.1]
    assert exact_em_sample(u, 2, math.inf, 2.0, np.random.default_rng(0)).tolist() == [1, 3]


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        subset_distribution(np.zeros(40), 10, 1.0)


# -- ratio and tail audits ----------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(utilities, st.integers(1, 3), st.sampled_from([0.5, 1.0, 4.0]), st.data())
def test_exact_em_ratio_bound(u, m, eps, data):
    m = min(m, len(u))
    k = data.draw(st.integers(0, len(u) - 1))
    new_u = data.draw(st.floats(-2.0, 0.0))
    assert privacy_ratio_audit(u, (k, new_u), m, eps, mode="exact_em") <= eps + 1e-9


def test_ratio_trivial_cases():
    u = [-0.3, -1.0, -0.2, -1.7]
    assert privacy_ratio_audit(u, (1, -1.0), 2, 1.0) == pytest.approx(0.0, abs=1e-15)
    for mode in ("exact_em", "gumbel"):
        assert privacy_ratio_audit(u, (1, -0.0), 2, 0.0, mode=mode) == 0.0


@pytest.mark.parametrize("t", [1.0, 2.0, 3.0])
def test_tail_bound(t):
    rng = np.random.default_rng(int(t))
    u = rng.uniform(-2, 0, 6)
    assert utility_tail_audit(u, 3, 1.0, 2.0, t, 50_000, rng) <= tail_bound(t, 50_000)


def test_tail_edge_cases():
    rng = np.random.default_rng(0)
    u = [-0.1, -0.3, -1.2, -0.5]
    # a huge t pushes the threshold below any achievable total
    assert utility_tail_audit(u, 2, 1.0, 2.0, 1e6, 1000, rng) == 0.0
    assert utility_tail_audit(u, 2, math.inf, 2.0, 0.5, 1000, rng) == 0.0


# -- blending ----------------------------------------------------------------

def _index():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [0.5, 0.5], [0.6, 0.6], [0.9, 0.9]])
    P = np.array([[0.8, 0.2], [0.6, 0.4], [0.55, 0.45], [0.3, 0.7], [0.1, 0.9]])
    return CandidateIndex(X, P)


def test_bucket_partition_properties():
    idx = _index()
    assert idx.bucket_sizes().tolist() == [3, 2]
    allidx = np.concatenate([idx.buckets[c] for c in range(2)])
    assert sorted(allidx.tolist()) == list(range(5))
    single = CandidateIndex(np.zeros((4, 1)), np.tile([0.2, 0.8], (4, 1)))
    assert single.bucket_sizes().tolist() == [0, 4]


def test_memorizing_buckets_follow_class_counts():
    ds = synth_blobs(3, 2, 15, 0.05, seed=0)
    model = train(ds, TrainConfig("tree_ensemble", n_trees=3, bootstrap=False))
    idx = build_candidate_index(model, ds)
    assert idx.bucket_sizes().tolist() == ds.class_counts().tolist()


def test_blend_mean_and_nearest():
    idx = _index()
    cfg = DefenseConfig(m=2, epsilon=math.inf)
    out = blend(np.array([0.9, 0.1]), np.array([0.0, 0.0]), idx, cfg, None)
    np.testing.assert_allclose(out.smoothed, [0.7, 0.3])
    one = blend(np.array([0.9, 0.1]), np.array([0.45, 0.5]), idx, DefenseConfig(m=1, epsilon=math.inf),
                None)
    np.testing.assert_array_equal(one.smoothed, idx.probs[2])


def test_blend_fallbacks():
    idx = _index()
    cfg = DefenseConfig(m=3, epsilon=1.0)
    small = blend(np.array([0.2, 0.8]), np.zeros(2), idx, cfg, np.random.default_rng(0))
    assert small.fallback and len(small.selection.indices) == 2
    lonely = CandidateIndex(np.zeros((2, 2)), np.tile([0.9, 0.1], (2, 1)))
    empty = blend(np.array([0.3, 0.7]), np.zeros(2), lonely, cfg, np.random.default_rng(0))
    assert empty.fallback and empty.selection is None
    np.testing.assert_array_equal(empty.smoothed, [0.3, 0.7])


def test_default_m():
    dense = CandidateIndex(np.zeros((100, 1)), np.repeat([[0.9, 0.1], [0.1, 0.9]], 50, axis=0))
    assert default_m(dense) == 5
    sparse = CandidateIndex(np.zeros((60, 1)), np.repeat([[0.9, 0.1], [0.1, 0.9]], [55, 5], axis=0))
    assert default_m(sparse) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000),
       st.sampled_from([0.1, 1.0, 10.0, math.inf]), st.sampled_from([1, 3, 5]),
       st.sampled_from(["gumbel", "exact_em"]))
def test_zero_label_loss_property(C, seed, eps, m, mode):
    rng = np.random.default_rng(seed)
    logits_ = rng.normal(scale=3, size=(40, C))
    P = np.exp(logits_ - logits_.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    idx = CandidateIndex(rng.uniform(0, 0.5, (40, 3)), P)
    cfg = DefenseConfig(m=m, epsilon=eps, sampler_mode=mode, seed=seed)
    Q = rng.uniform(0, 0.5, (15, 3))
    out = defend_batch(Q, Fixed(P[:15]), idx, cfg)
    assert np.array_equal(np.argmax(out.smoothed, axis=1), out.predicted)


def test_batch_matches_single_queries():
    ds = synth_blobs(3, 2, 30, 0.2, seed=0)
    model = train(ds, TrainConfig("logreg", epochs=200))
    idx = build_candidate_index(model, ds)
    cfg = DefenseConfig(m=3, epsilon=1.0, seed=9)
    batch = defend_batch(ds.X[:10], model, idx, cfg)
    again = defend_batch(ds.X[:10], model, idx, cfg)
    assert batch.smoothed.tobytes() == again.smoothed.tobytes()
    stream_seed = int(np.random.SeedSequence([9, 0]).generate_state(1)[0])
    for i in (0, 7):
        one = defend(ds.X[i], model, idx, cfg, query_rng(stream_seed, i))
        np.testing.assert_array_equal(one.smoothed, batch.smoothed[i])
