import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bypassdet.learn import (EvalReport, MlpTrainingError, SplitError, evaluate, gini, kmeans, split, train_forest,
                             train_mlp, train_svm, train_tree)
from bypassdet.learn.mlp import init_mlp, loss_and_gradients
from bypassdet.learn.models import Pipeline, fit_pipeline, resolve_params
from bypassdet.learn.svm import SvmModel, objective
from bypassdet.learn.tree import TreeModel, best_split
from bypassdet.features import FeatureMatrix

from oracles import brute_split, lloyd_steps_monotone, max_relative_error, numeric_gradients, small_1d_datasets


# ---------------------------------------------------------------- split


def test_split_sizes_from_dataset_counts():
    y = np.array([1] * 2126 + [0] * 4289)
    s = split(y, 2 / 3, 42)
    assert (len(s.train), len(s.test)) == (4276, 2139)
    for c, n in ((1, 2126), (0, 4289)):
        assert abs(np.sum(y[s.train] == c) - n * 2 / 3) <= 1


def test_split_boundary_and_errors():
    y = np.array([0] * 5 + [1] * 4)
    s = split(y, 0.99, 1)
    assert len(s.test) == 2 and sorted(y[s.test]) == [0, 1]
    with pytest.raises(SplitError):
        split(np.array([0, 0, 0, 1]), 2 / 3)
    with pytest.raises(SplitError):
        split(np.array([0, 1, 0, 1]), 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_split_properties(n0, n1, f, seed):
    y = np.array([0] * n0 + [1] * n1)
    s = split(y, f, seed)
    t = split(y, f, seed)
    assert np.array_equal(s.train, t.train) and np.array_equal(s.test, t.test)
    assert sorted(np.concatenate([s.train, s.test]).tolist()) == list(range(len(y)))
    for c in (0, 1):
        k = int(np.sum(y[s.train] == c))
        assert 1 <= k <= int(np.sum(y == c)) - 1


# ---------------------------------------------------------------- metrics


def test_evaluate_hand_counts():
    r = evaluate([1, 1, 0, 0], [1, 0, 0, 0])
    assert (r.tp, r.fp, r.tn, r.fn) == (1, 1, 2, 0)
    assert (r.accuracy, r.precision, r.recall) == (0.75, 0.5, 1.0)
    perfect = evaluate([1, 0], [1, 0])
    assert perfect.accuracy == 1.0 and perfect.fpr == 0.0
    assert evaluate([0, 0], [1, 0]).precision == 0.0
    with pytest.raises(ValueError):
        evaluate([1], [1, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_evaluate_identities(pairs):
    p, t = zip(*pairs)
    r = evaluate(p, t, [f"s{i}" for i in range(len(p))])
    assert r.tp + r.fp + r.tn + r.fn == len(p)
    assert r.accuracy == (r.tp + r.tn) / len(p)
    assert r.precision == (r.tp / (r.tp + r.fp) if r.tp + r.fp else 0.0)
    assert r.recall == (r.tp / (r.tp + r.fn) if r.tp + r.fn else 0.0)
    assert r.fpr == (r.fp / (r.fp + r.tn) if r.fp + r.tn else 0.0)
    assert len(r.flagged) == r.tp + r.fp
    assert EvalReport.from_dict(json.loads(r.to_json())) == r


# ---------------------------------------------------------------- tree


def test_gini_and_simple_split():
    assert gini([2, 2]) == 0.5 and gini([3, 0]) == 0.0
    t = train_tree(np.array([[1.0], [2], [3], [4]]), np.array([0, 0, 1, 1]), min_leaf=1)
    assert (t.root.feature, t.root.threshold) == (0, 2.5)
    assert t.root.left.is_leaf and t.root.right.is_leaf
    assert t.predict(np.array([[1.0], [2], [3], [4]])).tolist() == [0, 0, 1, 1]


def test_pure_node_is_leaf():
    t = train_tree(np.array([[1.0], [2.0]]), np.array([1, 1]))
    assert t.root.is_leaf and t.root.label == 1 and gini(t.root.counts) == 0


def test_tie_resolves_to_normal():
    t = train_tree(np.array([[1.0], [1.0]]), np.array([0, 1]))
    assert t.root.is_leaf and t.predict(np.array([[1.0]])).tolist() == [0]


def test_tree_errors():
    with pytest.raises(ValueError):
        train_tree(np.zeros((0, 2)), np.zeros(0))


def test_root_split_matches_exhaustive_search():
    checked = 0
    for x, y in small_1d_datasets(max_n=6):
        want = brute_split(x.tolist(), y.tolist(), 1)
        t = train_tree(x[:, None], y, max_depth=1, min_leaf=1)
        if want is None or y.min() == y.max():
            assert t.root.is_leaf
            continue
        assert t.root.threshold == want[1]
        checked += 1
    assert checked > 1000


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3, allow_nan=False), st.integers(0, 1)), min_size=2, max_size=8),
       st.integers(1, 3))
def test_best_split_matches_brute_force_on_floats(rows, min_leaf):
    x = [r[0] for r in rows]
    y = [r[1] for r in rows]
    want = brute_split(x, y, min_leaf)
    got = best_split(np.array(x), np.array(y), min_leaf)
    if want is None:
        assert got is None
    else:
        assert got[1] == want[1]
        assert got[0] == pytest.approx(float(want[0]) / len(x), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_unlimited_tree_fits_consistent_data(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 5, size=(30, 3)).astype(float)
    _, first = np.unique(X, axis=0, return_index=True)
    X = X[np.sort(first)]
    y = rng.integers(0, 2, len(X))
    t = train_tree(X, y, max_depth=None, min_leaf=1)
    assert np.array_equal(t.predict(X), y)
    assert TreeModel.from_dict(json.loads(json.dumps(t.to_dict()))).to_dict() == t.to_dict()


def test_tree_respects_limits():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(200, 4)), rng.integers(0, 2, 200)
    t = train_tree(X, y, max_depth=3, min_leaf=5)
    assert t.depth <= 3
    assert all(sum(n.counts) >= 5 for n in t.nodes())


# ---------------------------------------------------------------- forest


def forest_equals_tree(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(5, 40)), int(rng.integers(1, 6))
    X = rng.integers(0, 6, size=(n, d)).astype(float)
    y = rng.integers(0, 2, n)
    f = train_forest(X, y, n_trees=1, m_try=d, seed=seed, bootstrap=False)
    t = train_tree(X, y)
    Q = np.vstack([X, rng.uniform(-1, 7, size=(50, d))])
    return f.trees[0].to_dict() == t.to_dict() and np.array_equal(f.predict(Q), t.predict(Q))


def test_single_tree_forest_is_a_tree():
    assert all(forest_equals_tree(s) for s in range(100))


def test_forest_determinism_and_errors():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(60, 5)), rng.integers(0, 2, 60)
    a, b = train_forest(X, y, n_trees=7, seed=3), train_forest(X, y, n_trees=7, seed=3)
    assert a.to_dict() == b.to_dict()
    assert a.m_try == math.ceil(math.sqrt(5))
    for bad in (0, 6):
        with pytest.raises(ValueError):
            train_forest(X, y, n_trees=2, m_try=bad)


def test_forest_vote_tie_is_normal():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    f = train_forest(X, np.array([0, 0, 1, 1]), n_trees=2, seed=0, bootstrap=False, min_leaf=1)
    f.trees[1].root.left.counts = (0, 1)  # make the two trees disagree on the left branch
    assert f.votes(np.array([[0.0]])).tolist() == [1]
    assert f.predict(np.array([[0.0]])).tolist() == [0]


# ---------------------------------------------------------------- svm


def clusters(seed=0, n=10):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-2, 0.5, (n, 2)), rng.normal(2, 0.5, (n, 2))])
    return X, np.array([0] * n + [1] * n)


def test_svm_separates_clusters():
    X, y = clusters()
    X = X - X.mean(axis=0)
    m = train_svm(X, y)
    assert np.array_equal(m.predict(X), y)
    assert m.warnings == []
    assert SvmModel.from_dict(m.to_dict()).predict(X).tolist() == m.predict(X).tolist()


def test_svm_zero_model_predicts_normal():
    m = SvmModel(np.zeros(3), 0.0, 1e-3, 0, 0)
    assert m.predict(np.ones((2, 3))).tolist() == [0, 0]


def test_svm_objective_is_mean_based():
    X, y = clusters(1)
    m = train_svm(X, y, epochs=5)
    assert objective(m, np.vstack([X, X]), np.concatenate([y, y])) == pytest.approx(objective(m, X, y), rel=1e-12)


def test_svm_flags_unstandardized_input():
    X, y = clusters()
    assert train_svm(X + 10, y, epochs=2).warnings


# ---------------------------------------------------------------- mlp


def test_xor_is_learned_for_some_seed():
    X = np.array([[0.0, 0], [0, 1], [1, 0], [1, 1]])
    y = np.array([0, 1, 1, 0])
    assert any(np.array_equal(train_mlp(X, y, 5000, seed).predict(X), y) for seed in range(5))


def test_zero_epochs_is_initialization():
    m = train_mlp(np.ones((3, 2)), np.array([0, 1, 0]), 0, seed=4)
    init = init_mlp(2, 4)
    assert m.loss_history == []
    assert all(np.array_equal(a, b) for a, b in zip(m.weights, init.weights))
    assert m.layer_sizes == [2, 5, 5, 1]


@pytest.mark.parametrize("seed", range(10))
def test_mlp_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(3, 4)), rng.integers(0, 2, 3)
    m = init_mlp(4, seed)
    _, gw, gb = loss_and_gradients(m.weights, m.biases, X, y)
    nw, nb = numeric_gradients(m.weights, m.biases, X, y)
    assert max_relative_error(gw + gb, nw + nb) <= 1e-4


def test_mlp_divergence_reports_epoch():
    # a sigmoid/MSE loss is bounded, so only non-finite activations can break it
    X = np.array([[np.nan, 1.0], [0.0, 1.0]])
    with pytest.raises(MlpTrainingError) as err:
        train_mlp(X, np.array([1, 0]), 3)
    assert err.value.epoch == 0


def test_mlp_loss_decreases_on_clusters():
    X, y = clusters(2)
    m = train_mlp(X, y, 300)
    assert m.loss_history[-1] < m.loss_history[0]
    assert np.array_equal(m.predict(X), y)


# ---------------------------------------------------------------- kmeans


def test_kmeans_k1_is_mean():
    X = np.random.default_rng(0).normal(size=(20, 3))
    r = kmeans(X, 1)
    assert np.allclose(r.centroids[0], X.mean(axis=0)) and set(r.assignment) == {0}


def test_kmeans_recovers_far_clusters():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(0, 0.1, (15, 2)), rng.normal(50, 0.1, (9, 2))])
    truth = np.array([0] * 15 + [1] * 9)
    r = kmeans(X, 2, seed=1)
    # brute force over every 2-partition is infeasible at n=24; the best one is the true split
    same = lambda a, b: np.array_equal(a, b) or np.array_equal(a, 1 - b)
    assert same(r.assignment, truth)
    centers = [X[truth == c].mean(axis=0) for c in (0, 1)]
    best = sum(((X[truth == c] - centers[c]) ** 2).sum() for c in (0, 1))
    assert r.inertia == pytest.approx(best)


def test_kmeans_brute_force_partition_small():
    rng = np.random.default_rng(8)
    X = np.vstack([rng.normal(0, 0.2, (4, 2)), rng.normal(9, 0.2, (4, 2))])
    best = min(
        (sum(((X[m] - X[m].mean(axis=0)) ** 2).sum() for m in (mask, ~mask) if m.any()), tuple(mask))
        for mask in (np.array([(b >> i) & 1 for i in range(8)], dtype=bool) for b in range(1, 255))
    )
    r = kmeans(X, 2, seed=0)
    assert r.inertia == pytest.approx(best[0])


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_kmeans_monotone_lloyd(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(k, 60)), 3))
    r = kmeans(X, k, seed)
    assert lloyd_steps_monotone(r)
    assert r.inertia <= r.inertia_history[0] + 1e-9


def test_kmeans_empty_cluster_repair():
    # duplicate points make k-means++ pick identical centers, leaving one cluster empty
    X = np.array([[0.0, 0.0]] * 6 + [[1.0, 1.0]])
    r = kmeans(X, 3, seed=0)
    assert len(r.centroids) == 3 and lloyd_steps_monotone(r)


# ---------------------------------------------------------------- pipelines


def toy_matrix(seed=0, n=60):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.4).astype(int)
    X = rng.normal(size=(n, 4)) + y[:, None] * np.array([3.0, 0, 2.0, 0])
    return FeatureMatrix(X, ("a", "b", "c", "d"), tuple(f"s{i:02d}" for i in range(n))), y


@pytest.mark.parametrize("kind", ["tree", "forest", "svm", "mlp", "kmeans"])
def test_pipeline_round_trip(kind, tmp_path):
    m, y = toy_matrix()
    params = {"forest": {"n_trees": 5}, "mlp": {"epochs": 50}}.get(kind, {})
    p = fit_pipeline(kind, m, y, params, seed=1, select_k=3, pca_k=2 if kind != "tree" else None)
    p.save(tmp_path / "m.json")
    q = Pipeline.load(tmp_path / "m.json")
    assert np.array_equal(p.predict(m), q.predict(m))
    assert json.loads((tmp_path / "m.json").read_text())["schema_version"] == 1


def test_pipeline_column_mismatch_names_columns():
    m, y = toy_matrix()
    p = fit_pipeline("tree", m, y)
    with pytest.raises(ValueError, match="missing columns: d"):
        p.predict(m.select(("a", "b", "c")))


def test_unknown_kind_and_param():
    with pytest.raises(ValueError):
        resolve_params("bayes")
    with pytest.raises(ValueError):
        resolve_params("svm", {"depth": 3})


def test_kmeans_pipeline_crosstab_counts_training_rows():
    m, y = toy_matrix(3)
    p = fit_pipeline("kmeans", m, y)
    table = p.model.crosstab
    assert sum(map(sum, table)) == len(y)
    assert [sum(r[1] for r in table), sum(r[0] for r in table)] == [int(y.sum()), int(len(y) - y.sum())]
