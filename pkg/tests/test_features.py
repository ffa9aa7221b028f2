import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bypassdet.cdr import Dataset, clean, parse_cdr_file, slice_window
from bypassdet.features import (FEATURE_NAMES, FeatureMatrix, ScalerParams, SelectionError, apply_scaler, extract,
                                fit_scaler, label_vector, pca, point_biserial, select_features)
from bypassdet.synth import HbsConfig, ScenarioConfig, generate

from conftest import HAND25, small_world


def H(*counts):
    n = sum(counts)
    return -sum(c / n * math.log2(c / n) for c in counts)


# hand aggregation of tests/data/hand25.csv, one line per SIM
HAND = {
    "S1": dict(total_calls=7, distinct_callees=4, total_minutes=F(780, 60), avg_minutes=F(13, 7),
               outgoing_ratio=F(7, 8), incoming_calls=1, sms_count=0, data_sessions=0, distinct_cells=1,
               cell_entropy_bits=0.0, imsi_per_imei=3, night_ratio=F(5, 7), active_hours_per_day=F(5, 2),
               callee_repetition_ratio=F(3, 7), intl_presented_ratio=0),
    "S2": dict(total_calls=1, distinct_callees=1, total_minutes=F(3, 4), avg_minutes=F(3, 4),
               outgoing_ratio=F(1, 3), incoming_calls=2, sms_count=1, data_sessions=1, distinct_cells=2,
               cell_entropy_bits=H(2, 3), imsi_per_imei=3, night_ratio=1, active_hours_per_day=F(3, 2),
               callee_repetition_ratio=0, intl_presented_ratio=F(1, 2)),
    "S3": dict(total_calls=2, distinct_callees=2, total_minutes=F(21, 4), avg_minutes=F(21, 8),
               outgoing_ratio=F(1, 2), incoming_calls=2, sms_count=2, data_sessions=1, distinct_cells=3,
               cell_entropy_bits=H(3, 2, 2), imsi_per_imei=1, night_ratio=0, active_hours_per_day=F(5, 3),
               callee_repetition_ratio=0, intl_presented_ratio=F(1, 2)),
    "S4": dict(total_calls=0, distinct_callees=0, total_minutes=0, avg_minutes=0, outgoing_ratio=0,
               incoming_calls=3, sms_count=1, data_sessions=1, distinct_cells=1, cell_entropy_bits=0.0,
               imsi_per_imei=1, night_ratio=0, active_hours_per_day=F(3, 2), callee_repetition_ratio=0,
               intl_presented_ratio=F(2, 3)),
}
TOLERANT = {"total_minutes", "avg_minutes", "cell_entropy_bits"}


def hand_matrix():
    parsed = parse_cdr_file(HAND25)
    assert not parsed.rejected
    return extract(clean(parsed.dataset)[0])


def test_hand25_every_component():
    m = hand_matrix()
    assert m.sim_ids == ("S1", "S2", "S3", "S4")
    assert m.column_names == FEATURE_NAMES
    for sim, expected in HAND.items():
        got = m.vector(sim)
        assert set(expected) == set(FEATURE_NAMES)
        for name, want in expected.items():
            if name in TOLERANT:
                assert abs(got[name] - float(want)) <= 1e-9, (sim, name)
            else:
                assert got[name] == float(want), (sim, name)


def test_three_calls_two_peers():
    text = "\n".join([
        "record_id,timestamp,sim_id,imei,imsi,peer_id,cell_id,direction,service,duration_sec,peer_is_international",
        "a,2024-01-01T10:00:00Z,X,e,i,p1,c,MO,VOICE,60,0",
        "b,2024-01-01T11:00:00Z,X,e,i,p2,c,MO,VOICE,120,0",
        "c,2024-01-01T12:00:00Z,X,e,i,p1,c,MO,VOICE,180,0",
    ]) + "\n"
    from bypassdet.cdr import parse_cdr_text
    v = extract(parse_cdr_text(text).dataset).vector("X")
    assert (v["total_calls"], v["total_minutes"], v["avg_minutes"], v["distinct_callees"]) == (3, 6, 2, 2)
    assert v["callee_repetition_ratio"] == pytest.approx(1 / 3, abs=1e-15)
    assert v["cell_entropy_bits"] == 0.0


def test_empty_dataset_gives_empty_matrix():
    m = extract(Dataset.from_records([]))
    assert m.values.shape == (0, len(FEATURE_NAMES))
    assert FeatureMatrix.from_csv(m.to_csv()).values.shape == (0, len(FEATURE_NAMES))


def test_csv_round_trip_is_exact():
    m = hand_matrix()
    back = FeatureMatrix.from_csv(m.to_csv())
    assert back.sim_ids == m.sim_ids and back.column_names == m.column_names
    assert np.array_equal(back.values, m.values)
    assert m.to_csv().splitlines()[0] == "sim_id," + ",".join(FEATURE_NAMES)


def check_invariants(m: FeatureMatrix):
    v = m.values
    assert np.isfinite(v).all()
    assert (v >= 0).all()
    for name in FEATURE_NAMES:
        if name.endswith("_ratio"):
            assert (m.column(name) <= 1).all()
    tc, tm, am = m.column("total_calls"), m.column("total_minutes"), m.column("avg_minutes")
    assert np.allclose(am * tc, tm, rtol=1e-9, atol=0)
    assert np.array_equal(m.column("cell_entropy_bits") == 0, m.column("distinct_cells") <= 1)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_invariants_and_permutation_invariance(seed, hbs):
    w = small_world(seed % 5, **({} if not hbs else dict(migration=True, service_mimicry=True)))
    m = extract(w.dataset)
    check_invariants(m)
    rng = np.random.default_rng(seed)
    recs = list(w.dataset.records)
    shuffled = [recs[i] for i in rng.permutation(len(recs))]
    # Dataset.from_records re-sorts, so also bypass sorting to test the extractor itself
    raw = Dataset(tuple(shuffled), w.dataset.window_start, w.dataset.window_end)
    assert np.array_equal(extract(raw).values, m.values)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3 * 86_400 - 1))
def test_window_additivity_of_counters(cut):
    w = small_world(1)
    d = w.dataset
    b = d.window_start + np.timedelta64(cut, "s").astype(object)
    whole = extract(d)
    parts = [extract(slice_window(d, d.window_start, b)), extract(slice_window(d, b, d.window_end))]
    for name in ("total_calls", "incoming_calls", "sms_count", "data_sessions"):
        total = dict(zip(whole.sim_ids, whole.column(name)))
        summed = dict.fromkeys(total, 0.0)
        for p in parts:
            for sim, x in zip(p.sim_ids, p.column(name)):
                summed[sim] += x
        assert summed == total


def test_hbs_off_separability_precondition():
    w = generate(ScenarioConfig(seed=11, days=5, n_subscribers=300, n_simboxes=3, sims_per_box=6))
    m = extract(w.dataset)
    y = label_vector(m, w.truth.labels)
    fraud, normal = m.values[y == 1], m.values[y == 0]
    col = {n: i for i, n in enumerate(FEATURE_NAMES)}
    assert (fraud[:, col["cell_entropy_bits"]] == 0).all()
    assert (fraud[:, col["sms_count"]] == 0).all()
    assert (fraud[:, col["outgoing_ratio"]] >= 0.9).all()
    assert (normal[:, col["distinct_cells"]] >= 2).all()


# ---------------------------------------------------------------- scaling


def matrix(values, names=None):
    values = np.asarray(values, dtype=float)
    names = names or tuple(f"f{i}" for i in range(values.shape[1]))
    return FeatureMatrix(values, tuple(names), tuple(f"s{i}" for i in range(len(values))))


def test_scaler_hand_examples():
    p = fit_scaler(matrix([[1.0], [3.0]]))
    assert p.std[0] == pytest.approx(math.sqrt(2))
    # (x - 2) / sqrt(2); the scaled column then has sample std exactly 1
    z = apply_scaler(matrix([[1.0], [3.0]]), p).values[:, 0]
    assert z == pytest.approx([-1 / math.sqrt(2), 1 / math.sqrt(2)], abs=1e-15)
    assert z.std(ddof=1) == pytest.approx(1.0, abs=1e-12)
    const = matrix([[5.0], [5.0], [5.0]])
    pc = fit_scaler(const)
    assert pc.constant.tolist() == [True]
    assert apply_scaler(const, pc).values.tolist() == [[0.0], [0.0], [0.0]]
    m = hand_matrix()
    assert np.array_equal(apply_scaler(m, ScalerParams.identity(m.column_names)).values, m.values)
    with pytest.raises(ValueError):
        fit_scaler(matrix([[1.0, 2.0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2**31))
def test_scaler_standardizes(n, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(rng.uniform(-50, 50, d), rng.uniform(0.1, 20, d), size=(n, d))
    x[:, 0] = 7.25  # one constant column
    m = matrix(x)
    out = apply_scaler(m, fit_scaler(m)).values
    assert np.all(out[:, 0] == 0)
    if d > 1:
        assert np.all(np.abs(out[:, 1:].mean(axis=0)) <= 1e-9)
        assert np.all(np.abs(out[:, 1:].std(axis=0, ddof=1) - 1) <= 1e-9)


def test_scaler_json_round_trip():
    m = hand_matrix()
    p = fit_scaler(m)
    q = ScalerParams.from_dict(p.to_dict())
    assert np.array_equal(p.mean, q.mean) and np.array_equal(p.std, q.std)


# ---------------------------------------------------------------- selection


def brute_corr(x, y):
    out = []
    for col in x.T:
        xc, yc = col - col.mean(), y - y.mean()
        den = math.sqrt(sum(a * a for a in xc) * sum(b * b for b in yc))
        out.append(0.0 if den == 0 else float(sum(a * b for a, b in zip(xc, yc)) / den))
    return out


def test_selection_ranks_thresholded_column_first():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(60, 4))
    x[:, 2] = rng.integers(0, 40, 60)
    y = (x[:, 2] > 20).astype(float)
    m = matrix(x, ("a", "b", "total_calls", "d"))
    r = brute_corr(x, y)
    assert np.allclose(point_biserial(x, y), r, atol=1e-12)
    ranked = select_features(m, y, 4)
    assert ranked[0] == "total_calls"
    assert list(ranked) == [m.column_names[i] for i in sorted(range(4), key=lambda i: (-abs(r[i]), i))]


def test_selection_identity_and_constants():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 3))
    y = (rng.random(30) < 0.5).astype(float)
    assert set(select_features(matrix(x), y, 3)) == {"f0", "f1", "f2"}
    x[:, 1] = 4.0
    for k in (1, 2, 3):
        assert "f1" not in select_features(matrix(x), y, k)
    with pytest.raises(SelectionError):
        select_features(matrix(np.ones((5, 2))), np.array([0, 1, 0, 1, 0]), 1)
    with pytest.raises(ValueError):
        select_features(matrix(x), y, 0)


def test_selection_ties_follow_column_order():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    assert select_features(matrix(x), np.array([0, 1, 0, 1]), 2) == ("f0", "f1")


# ---------------------------------------------------------------- PCA


def test_pca_line_explains_everything():
    t = np.linspace(-3, 5, 17)
    x = np.column_stack([t, 2 * t + 1])
    r = pca(matrix(x), 2)
    # closed form: covariance is var(t) * [[1, 2], [2, 4]] with eigenvalues 5 var(t), 0
    assert r.explained_ratio[0] == pytest.approx(1.0, abs=1e-6)
    assert r.explained_variance[0] == pytest.approx(5 * t.var(ddof=1), rel=1e-9)
    assert np.allclose(np.abs(r.components[0]), np.array([1, 2]) / math.sqrt(5), atol=1e-6)


def test_pca_isotropic_cross():
    x = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    r = pca(matrix(x), 2)
    assert abs(r.explained_variance[0] - r.explained_variance[1]) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.integers(1, 6), st.integers(0, 2**31))
def test_pca_properties(n, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) @ rng.normal(size=(d, d))
    m = matrix(x)
    r = pca(m, d)
    gram = r.components @ r.components.T
    assert np.allclose(gram, np.eye(d), atol=1e-6)
    assert np.all(np.diff(r.explained_variance) <= 1e-9 * max(1.0, r.total_variance))
    assert r.explained_variance.sum() == pytest.approx(r.total_variance, rel=1e-6, abs=1e-9)
    proj = r.transform(m).values
    assert np.allclose(proj, (x - x.mean(axis=0)) @ r.components.T)
    recon = proj @ r.components + r.mean
    assert np.max(np.abs(recon - x)) <= 1e-6 * max(1.0, np.abs(x).max())
    with pytest.raises(ValueError):
        pca(m, d + 1)
    with pytest.raises(ValueError):
        pca(m, 0)
