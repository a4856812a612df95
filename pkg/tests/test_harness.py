import json

import numpy as np
import pytest

from streamtune import harness
from streamtune.corpus import build_corpus
from streamtune.errors import InsufficientDataError, InvalidArgumentError
from streamtune.features import select_features
from streamtune.harness import (EvalOptions, compare_schemes, cross_suite_evaluate, fit_model,
                                geomean, loocv_evaluate, loocv_folds, merging_ablation, pearson,
                                ratio_speedup_correlation)
from streamtune.simulator import parse_grid

from conftest import CORPUS_SEED
from test_corpus import tiny_spec


@pytest.fixture(scope="module")
def loocv(default_corpus):
    return loocv_evaluate(default_corpus, EvalOptions(), CORPUS_SEED)


@pytest.fixture(scope="module")
def small_corpus():
    spec = tiny_spec()
    spec["programs"] = [
        dict(spec["programs"][0], program_id=f"p{i}", family=f"f{i}", suite="train",
             compute_ratio=r, outer_iterations=o)
        for i, (r, o) in enumerate([(0.1, 1), (3.0, 1), (1.0, 400)])
    ] + [dict(spec["programs"][1], compute_ratio=5.0)]
    spec["programs"][1]["family"] = "f0"  # sibling of p0
    return build_corpus(text=json.dumps(spec), seed=2, grid=parse_grid("1,2,4,8x1,2,4,8"))


# -- geomean -----------------------------------------------------------------------

def test_geomean_examples():
    assert geomean([2, 8]) == pytest.approx(4)
    assert geomean([3.5]) == pytest.approx(3.5)
    assert geomean([1, 1, 1]) == 1.0


@pytest.mark.parametrize("bad", [[], [1, 0], [2, -1]])
def test_geomean_rejects(bad):
    with pytest.raises(InvalidArgumentError):
        geomean(bad)


# -- folds and leakage --------------------------------------------------------------------

def test_sibling_programs_excluded_together(small_corpus):
    folds = dict(loocv_folds(small_corpus))
    assert folds["p0"] == ["p0", "p1"] and folds["p1"] == ["p0", "p1"]
    assert folds["p2"] == ["p2"]


def test_two_program_corpus_gives_two_folds():
    spec = tiny_spec()
    spec["programs"][1].update(suite="train", family="b")
    c = build_corpus(text=json.dumps(spec), seed=0, grid=parse_grid("1,2x1,2"))
    report = loocv_evaluate(c, EvalOptions(learner="knn"), 0)
    assert len(report.manifests) == 2


def test_fold_manifests_show_no_leakage(default_corpus, loocv):
    c = default_corpus
    for m in loocv.manifests:
        held_family = {c.family_of(p) for p in m.held_out}
        assert all(c.family_of(s.split("/")[0]) not in held_family for s in m.train_samples)
        # the scaler and feature set are reproducible from the listed samples alone
        rows = [c.features[s] for s in m.train_samples]
        names = select_features(rows)
        assert names == m.features
        _, info = fit_model(c, m.train_samples, EvalOptions(), m.seed)
        assert info["scaler_digest"] == m.scaler_digest


def test_every_train_sample_predicted_once(default_corpus, loocv):
    ids = [f"{r.program}/{r.dataset}" for r in loocv.rows]
    assert sorted(ids) == sorted(m.sample_id for m in default_corpus.metas("train"))


def test_pct_of_oracle_bounds(loocv):
    for r in loocv.rows:
        assert 0 < r.pct_of_oracle <= 1 and r.speedup > 0
        if r.config == r.oracle_config:
            assert r.pct_of_oracle == 1.0


# -- cross-suite -------------------------------------------------------------------------

def test_cross_suite_rows(default_corpus):
    c = default_corpus
    report = cross_suite_evaluate(c, EvalOptions(), 1)
    ids = [f"{r.program}/{r.dataset}" for r in report.rows]
    assert sorted(ids) == sorted(m.sample_id for m in c.metas("test"))
    assert report.geomeans() == cross_suite_evaluate(c, EvalOptions(), 1).geomeans()


# -- scheme comparison -------------------------------------------------------------------

@pytest.fixture(scope="module")
def comparison(default_corpus, loocv):
    return compare_schemes(default_corpus, loocv.predictions(), CORPUS_SEED, anneal_budget=20)


def test_oracle_dominates(comparison):
    oracle = {(r.program, r.dataset): r.speedup for r in comparison.rows_for("oracle")}
    for r in comparison.rows:
        assert r.speedup <= oracle[(r.program, r.dataset)]


def test_fixed_equal_to_oracle_means_equal_speedup(comparison):
    oracle = {(r.program, r.dataset): r for r in comparison.rows_for("oracle")}
    for r in comparison.rows_for("fixed-4-16") + comparison.rows_for("fixed-17-85"):
        o = oracle[(r.program, r.dataset)]
        if r.config == o.config:
            assert r.speedup == o.speedup


def test_schemes_in_order(comparison):
    assert comparison.schemes() == list(harness.SCHEMES)


def test_report_csv_and_summary(comparison):
    lines = comparison.to_csv().splitlines()
    assert lines[0] == "scheme,program,dataset,partitions,tasks,speedup,pct_of_oracle"
    assert len(lines) == 1 + len(comparison.rows)
    summary = json.loads(comparison.summary_json())
    assert set(summary["geomean_speedup"]) == set(harness.SCHEMES)
    assert comparison.speedup_distribution_csv().startswith("scheme,speedup\n")


def test_compare_is_byte_identical(default_corpus, loocv, comparison):
    again = compare_schemes(default_corpus, loocv.predictions(), CORPUS_SEED, anneal_budget=20)
    assert again.to_csv() == comparison.to_csv()


# -- correlation --------------------------------------------------------------------------

def test_pearson_degenerate_and_two_point():
    assert pearson([1, 1, 1], [2, 3, 4]) == (0.0, True)
    r, flagged = pearson([1, 2], [5, 3])
    assert abs(r) == pytest.approx(1.0) and not flagged
    with pytest.raises(InsufficientDataError):
        pearson([1], [1])


def test_pearson_matches_numpy():
    rng = np.random.default_rng(0)
    x, y = rng.random(30), rng.random(30)
    assert pearson(x, y)[0] == pytest.approx(np.corrcoef(x, y)[0, 1])


def test_ratio_correlation_positive(default_corpus, loocv):
    corr = ratio_speedup_correlation(default_corpus, loocv)
    assert -1 <= corr.r <= 1
    assert corr.r > 0
    assert len(corr.scatter_csv().splitlines()) == len(loocv.rows) + 1


# -- ablation ---------------------------------------------------------------------------

def test_ablation_same_folds_and_fewer_classes(small_corpus):
    ab = merging_ablation(small_corpus, EvalOptions(target_nr=1), 5)
    assert [m.train_samples for m in ab.merged.manifests] == \
           [m.train_samples for m in ab.unmerged.manifests]
    assert [m.seed for m in ab.merged.manifests] == [m.seed for m in ab.unmerged.manifests]
    for mm, mu in zip(ab.merged.manifests, ab.unmerged.manifests):
        assert mm.class_count <= mu.class_count


def test_single_label_training_falls_back(small_corpus):
    ids = [w.sample_id for w in small_corpus.samples_of(["p2"])]
    model, info = fit_model(small_corpus, ids, EvalOptions(target_nr=1, w2=1000), 0)
    assert info["class_count"] == 1
    cand = small_corpus.features[ids[0]]
    assert harness.predict_config(model, cand) == model.label_configs[0]


def test_other_learners_run(small_corpus):
    for name in ("svm-lin", "svm-rbf", "knn", "wknn", "tree"):
        report = loocv_evaluate(small_corpus, EvalOptions(learner=name), 0)
        assert report.rows


def test_tuned_learner_runs(small_corpus):
    report = loocv_evaluate(small_corpus, EvalOptions(learner="knn", tune=True), 0)
    assert len(report.rows) == len(small_corpus.metas("train"))
