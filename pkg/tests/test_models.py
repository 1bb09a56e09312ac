import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gradient_check
from nblend.data import Dataset, split, synth_blobs
from nblend.models import (
    TrainConfig,
    TrainingError,
    load_model,
    save_model,
    task_accuracy,
    train,
)
from nblend.models.base import Classifier


def _separable_1d(n=40):
    x = np.concatenate([np.linspace(0.0, 0.2, n // 2), np.linspace(0.8, 1.0, n // 2)])
    y = np.repeat([0, 1], n // 2)
    return Dataset(X=x[:, None], y=y, num_classes=2)


CONFIGS = [
    TrainConfig("logreg", learning_rate=5.0, epochs=2000),
    TrainConfig("tree_ensemble", n_trees=5),
    TrainConfig("mlp", hidden=(8,), learning_rate=0.2, epochs=300, batch_size=8),
]


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c.kind)
def test_separable_1d(cfg):
    ds = _separable_1d()
    model = train(ds, cfg)
    test = Dataset(X=np.array([[0.05], [0.1], [0.9], [0.95]]), y=np.array([0, 0, 1, 1]),
                   num_classes=2)
    assert task_accuracy(model, test) == 1.0
    probs = model.predict_proba(test.X)
    assert np.all(probs[np.arange(4), test.y] > 0.9)


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c.kind)
def test_single_class_rejected(cfg):
    ds = Dataset(X=np.zeros((5, 2)), y=np.zeros(5, int), num_classes=1)
    with pytest.raises(TrainingError):
        train(ds, cfg)


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c.kind)
def test_roundtrip_json(cfg, tmp_path):
    ds = synth_blobs(3, 4, 20, 0.3, seed=1)
    model = train(ds, cfg)
    save_model(model, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(model.predict_proba(ds.X), again.predict_proba(ds.X))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(range(len(CONFIGS))), st.integers(0, 1000))
def test_outputs_on_simplex(which, seed):
    ds = synth_blobs(3, 3, 10, 0.4, seed=seed)
    cfg = CONFIGS[which]
    model = train(ds, TrainConfig(**{**cfg.to_dict(), "epochs": 50, "seed": seed}))
    X = np.random.default_rng(seed).uniform(-1, 2, size=(20, 3))
    P = model.predict_proba(X)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_tree_memorizes(iris):
    plan = split(iris, (0.45, 0.45, 0.1), 10, seed=0)
    tr, te = iris.subset(plan.target_train), iris.subset(plan.target_test)
    model = train(tr, TrainConfig("tree_ensemble", n_trees=15, seed=0))
    seen = model.predict_proba(tr.X).max(axis=1).mean()
    unseen = model.predict_proba(te.X).max(axis=1).mean()
    assert seen > 0.95
    assert unseen < seen


def test_tree_pure_split():
    X = np.array([[0.0], [0.1], [0.9], [1.0]])
    y = np.array([0, 0, 1, 1])
    ds = Dataset(X=X, y=y, num_classes=2)
    model = train(ds, TrainConfig("tree_ensemble", n_trees=1, bootstrap=False, max_features=None))
    assert task_accuracy(model, ds) == 1.0
    tree = model.trees[0]
    assert tree.n_nodes == 3


def test_tree_determinism():
    ds = synth_blobs(3, 4, 20, 0.5, seed=2)
    cfg = TrainConfig("tree_ensemble", n_trees=1, seed=4)
    a, b = train(ds, cfg), train(ds, cfg)
    assert a.predict_proba(ds.X).tobytes() == b.predict_proba(ds.X).tobytes()


def test_mlp_blobs():
    ds = synth_blobs(2, 5, 100, 0.3, seed=5)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(ds))
    tr, te = ds.subset(perm[:100]), ds.subset(perm[100:])
    model = train(tr, TrainConfig("mlp", hidden=(16, 8), learning_rate=0.1, epochs=100,
                                  batch_size=16))
    assert task_accuracy(model, te) > 0.9


def test_mlp_without_hidden_layers_matches_logreg():
    rng = np.random.default_rng(1)
    X = np.concatenate([rng.uniform(0, 0.3, (30, 2)), rng.uniform(0.7, 1, (30, 2))])
    y = np.repeat([0, 1], 30)
    ds = Dataset(X=X, y=y, num_classes=2)
    lr = train(ds, TrainConfig("logreg", learning_rate=2.0, epochs=3000))
    mlp = train(ds, TrainConfig("mlp", hidden=(), learning_rate=0.2, epochs=600,
                                batch_size=60))
    fresh = np.concatenate([rng.uniform(0, 0.3, (100, 2)), rng.uniform(0.7, 1, (100, 2))])
    for Q in (X, fresh):
        np.testing.assert_array_equal(lr.predict(Q), mlp.predict(Q))
    gap = np.abs(lr.predict_proba(fresh) - mlp.predict_proba(fresh)).max()
    assert gap < 0.1


def test_gradient_check():
    assert gradient_check(seed=0) <= 1e-4
    assert gradient_check(seed=1, sizes=(2, 5, 4, 3)) <= 1e-4


def test_divergence_is_reported():
    ds = synth_blobs(2, 2, 10, 0.3, seed=0)
    X = np.asarray(ds.X) * 1e200
    big = Dataset(X=X, y=ds.y, num_classes=2)
    with pytest.raises(TrainingError, match="epoch"):
        train(big, TrainConfig("logreg", learning_rate=1e10, epochs=5))


def test_accuracy_oracles():
    ds = synth_blobs(2, 2, 500, 0.3, seed=0)

    class Oracle(Classifier):
        num_classes = 2

        def predict_proba(self, X):
            return np.eye(2)[ds.y]

    class Coin(Classifier):
        num_classes = 2

        def predict_proba(self, X):
            return np.eye(2)[np.random.default_rng(3).integers(0, 2, len(X))]

    assert task_accuracy(Oracle(), ds) == 1.0
    n = len(ds)
    assert abs(task_accuracy(Coin(), ds) - 0.5) <= 3 * np.sqrt(0.25 / n)
    with pytest.raises(ValueError):
        task_accuracy(Oracle(), ds.subset([]))
