import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from streamtune.errors import InsufficientDataError
from streamtune.features import (SELECTED_FEATURES, apply_scaler, candidate_order, combine_features,
                                 extract_features, feature_importance, fit_scaler, load_manifest,
                                 pearson_matrix, prune_correlated, raw_feature_names,
                                 select_features, varimax, varimax_criterion)
from streamtune.simulator import BASELINE, StreamConfig, profile_config

from conftest import make_workload


def baseline_features(w, seed=0):
    return extract_features(w, profile_config(w, BASELINE, 1), seed=seed)


# -- extraction ----------------------------------------------------------------

def test_manifest_has_38_raw_counters():
    names = raw_feature_names()
    assert len(names) == 38 and len(set(names)) == 38
    assert set(SELECTED_FEATURES) <= set(candidate_order())


def test_dts_direct_formula():
    raw = baseline_features(make_workload(elements=1000))
    assert raw["dts"] == 8000.0
    assert len(raw) == 38 and all(math.isfinite(v) for v in raw.values())


def test_extraction_deterministic():
    w = make_workload(outer_iterations=5)
    assert baseline_features(w, 3) == baseline_features(w, 3)


def test_extraction_rejects_non_baseline_run():
    w = make_workload()
    with pytest.raises(ValueError):
        extract_features(w, profile_config(w, StreamConfig(2, 2), 0))


def test_datasets_differ_only_in_size_dependent_counters():
    sized = {e["name"] for e in load_manifest()["raw"] if e["size_dependent"]}
    w1 = make_workload(program_id="prog", dataset_id="n1", elements=4096, noise_sigma=0.02)
    w2 = dataclasses.replace(w1, dataset_id="n2", elements=8192)
    f1, f2 = baseline_features(w1), baseline_features(w2)
    changed = {k for k in f1 if f1[k] != f2[k]}
    assert changed and changed <= sized


def test_counts_non_negative_rates_in_unit_interval():
    cand = combine_features(baseline_features(make_workload(outer_iterations=3)))
    assert 0 <= cand["branch_miss_rate"] <= 1 and 0 <= cand["l1_dcr"] <= 1
    assert all(v >= 0 for v in cand.values())


# -- combination ----------------------------------------------------------------

def raw_with(**kw):
    raw = dict.fromkeys(raw_feature_names(), 1.0)
    raw.update(kw)
    return raw


def test_combined_rates():
    cand = combine_features(raw_with(branch_hits=90, branch_misses=10, l1_misses=5, l1_accesses=100))
    assert cand["branch_miss_rate"] == pytest.approx(0.1)
    assert cand["l1_dcr"] == pytest.approx(0.05)
    assert "branch_hits" not in cand and "l1_accesses" not in cand


def test_zero_denominator_rate_is_zero():
    cand = combine_features(raw_with(branch_hits=0, branch_misses=0))
    assert cand["branch_miss_rate"] == 0.0


def test_compression_is_log1p():
    raw = raw_with(dts=1e6)
    assert combine_features(raw)["dts"] == pytest.approx(math.log1p(1e6))
    assert combine_features(raw, compress=False)["dts"] == 1e6


def test_candidate_count():
    assert len(combine_features(raw_with())) == 36


# -- correlation and pruning ---------------------------------------------------

def test_pearson_examples():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    m = pearson_matrix(np.c_[x, -x, np.full(4, 3.0)], ["a", "b", "c"])
    assert m.r[0, 0] == 1.0
    assert m.r[0, 1] == pytest.approx(-1.0)
    assert m.r[0, 2] == 0.0 and m.constant.tolist() == [False, False, True]


def test_pearson_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        pearson_matrix([[1.0, 2.0]], ["a", "b"])


def matrix(names, r):
    from streamtune.features import CorrelationMatrix
    return CorrelationMatrix(names, np.array(r, dtype=float), np.zeros(len(names), dtype=bool))


def test_prune_keeps_earlier_of_correlated_pair():
    assert prune_correlated(matrix(["a", "b"], [[1, 0.9], [0.9, 1]])) == ["a"]


def test_prune_keeps_all_when_uncorrelated():
    assert prune_correlated(matrix(["a", "b"], [[1, 0.7], [0.7, 1]])) == ["a", "b"]


def test_prune_chain():
    r = [[1, 0.8, 0.1], [0.8, 1, 0.8], [0.1, 0.8, 1]]
    assert prune_correlated(matrix(["A", "B", "C"], r)) == ["A", "C"]


def test_prune_drops_constants():
    X = np.c_[np.arange(5.0), np.ones(5), np.arange(5.0) ** 3]
    assert prune_correlated(pearson_matrix(X, ["a", "k", "c"])) == ["a"]


samples = arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(2, 8)),
                 elements=st.floats(-1e3, 1e3, allow_nan=False, width=32))


@settings(max_examples=150, deadline=None)
@given(X=samples)
def test_pruned_set_is_weakly_correlated_and_stable(X):
    names = [f"f{i}" for i in range(X.shape[1])]
    kept = prune_correlated(pearson_matrix(X, names))
    idx = [names.index(k) for k in kept]
    sub = pearson_matrix(X[:, idx], kept)
    off = np.abs(sub.r[~np.eye(len(kept), dtype=bool)])
    assert off.size == 0 or off.max() <= 0.7
    assert prune_correlated(sub) == kept


@settings(max_examples=100, deadline=None)
@given(X=samples)
def test_pearson_symmetric_and_bounded(X):
    m = pearson_matrix(X, [f"f{i}" for i in range(X.shape[1])])
    assert np.array_equal(m.r, m.r.T)
    assert np.all(np.abs(m.r) <= 1.0)


def test_default_corpus_keeps_table1_features(default_corpus):
    rows = [default_corpus.features[w.sample_id]
            for w in default_corpus.samples_of(default_corpus.program_ids("train"))]
    assert tuple(select_features(rows)) == SELECTED_FEATURES


# -- scaling ---------------------------------------------------------------------

def test_scaler_examples():
    p = fit_scaler([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]])
    assert apply_scaler(p, [4.0, 5.0]).tolist() == [0.5, 0.0]
    assert apply_scaler(p, [8.0, 5.0]).tolist() == [1.0, 0.0]
    assert apply_scaler(p, [2.0, 9.0]).tolist() == [0.0, 0.0]


@settings(max_examples=150, deadline=None)
@given(X=samples, q=arrays(np.float64, 8, elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_scaled_values_in_unit_interval(X, q):
    p = fit_scaler(X)
    assert np.all(p.mins <= p.maxs)
    for row in np.vstack([X, q[None, :X.shape[1]]]):
        s = apply_scaler(p, row)
        assert np.all((s >= 0) & (s <= 1))


# -- importance ------------------------------------------------------------------

def test_single_varying_feature_ranks_first():
    rng = np.random.default_rng(0)
    X = np.c_[np.ones(20), rng.random(20), np.full(20, 2.0)]
    res = feature_importance(X, ["a", "b", "c"])
    assert res.ranking[0][0] == "b"


def test_orthogonal_features_equal_importance():
    X = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    res = feature_importance(X, ["a", "b"])
    assert res.ranking[0][1] == pytest.approx(res.ranking[1][1], abs=1e-6)


def test_importance_needs_enough_data():
    with pytest.raises(InsufficientDataError):
        feature_importance(np.zeros((2, 3)), ["a", "b", "c"])


def test_varimax_fixed_point():
    L = np.array([[0.9, 0.0], [0.8, 0.0], [0.0, 0.7], [0.0, 0.6]])
    rotated, _, _ = varimax(L)
    assert np.allclose(rotated, L, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(L=arrays(np.float64, st.tuples(st.integers(3, 10), st.integers(2, 4)),
                elements=st.floats(-1, 1, allow_nan=False)))
def test_varimax_criterion_non_decreasing_and_orthogonal(L):
    _, R, history = varimax(L)
    assert all(b >= a - 1e-12 for a, b in zip(history, history[1:]))
    assert np.allclose(R.T @ R, np.eye(R.shape[1]), atol=1e-8)


def test_varimax_criterion_formula():
    L = np.array([[1.0, 0.0], [0.0, 1.0]])
    # column variances of squared loadings: 0.25 each
    assert varimax_criterion(L) == pytest.approx(0.5)


def test_pca_retains_95_percent():
    rng = np.random.default_rng(4)
    X = rng.random((40, 6)) @ rng.random((6, 6))
    res = feature_importance(X, list("abcdef"))
    assert res.explained >= 0.95
