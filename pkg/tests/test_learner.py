import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from streamtune.errors import DegenerateDatasetError, InputError, InvalidArgumentError
from streamtune.learner import (Dataset, Hyperparams, accuracy, decision_values, default_grid, gini,
                                grid_search_cv, kernel_matrix, load_model, model_from_dict,
                                model_to_dict, predict, predict_labels, save_model, train,
                                train_binary, train_knn, train_svm, train_tree)
from streamtune.simulator import StreamConfig

QUAD = Hyperparams(kernel="quadratic", C=10.0, gamma=1.0, coef0=1.0)
LIN = Hyperparams(kernel="linear", C=10.0)
XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([1.0, 1.0, -1.0, -1.0])


def dual_qp(X, y, h):
    """Solve the C-SVC dual with a general-purpose constrained optimiser."""
    Q = np.outer(y, y) * kernel_matrix(X, X, h)
    res = minimize(lambda a: 0.5 * a @ Q @ a - a.sum(), np.zeros(len(y)),
                   jac=lambda a: Q @ a - 1.0, bounds=[(0, h.C)] * len(y),
                   constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    return res.x


# -- SVM -------------------------------------------------------------------------

def test_xor_quadratic_matches_direct_dual():
    sv, coef, bias, gap = train_binary(XOR_X, XOR_Y, QUAD)
    assert len(sv) == 4
    alpha_qp = dual_qp(XOR_X, XOR_Y, QUAD)
    # coef = alpha * y, rows in input order since all four are support vectors
    assert np.allclose(np.abs(coef), alpha_qp, atol=1e-3)
    model = train_svm(Dataset(XOR_X, np.where(XOR_Y > 0, 1, 0)), QUAD)
    assert accuracy(model, Dataset(XOR_X, np.where(XOR_Y > 0, 1, 0))) == 1.0


def test_linearly_separable_linear_kernel():
    rng = np.random.default_rng(0)
    X = np.r_[rng.random((20, 2)) * 0.4, 0.6 + rng.random((20, 2)) * 0.4]
    y = np.r_[np.zeros(20, int), np.ones(20, int)]
    assert accuracy(train_svm(Dataset(X, y), LIN), Dataset(X, y)) == 1.0


def test_single_label_is_degenerate():
    with pytest.raises(DegenerateDatasetError):
        train_svm(Dataset(XOR_X, [2, 2, 2, 2]), QUAD)


def machines_feasible(model, C):
    for mach in model.machines:
        assert np.all(np.abs(mach.coef) <= C + 1e-12)
        assert abs(mach.coef.sum()) <= 1e-8
        assert mach.kkt_gap < 1e-3


labelled = st.integers(0, 10_000).map(lambda s: np.random.default_rng(s))


@settings(max_examples=40, deadline=None)
@given(rng=labelled, labels=st.integers(2, 4), kernel=st.sampled_from(["linear", "quadratic", "gaussian"]),
       C=st.sampled_from([0.1, 1.0, 10.0]))
def test_dual_feasibility(rng, labels, kernel, C):
    n = 24
    X = rng.random((n, 3))
    y = np.arange(n) % labels
    model = train_svm(Dataset(X, y), Hyperparams(kernel=kernel, C=C))
    assert len(model.machines) == labels * (labels - 1) // 2
    machines_feasible(model, C)


def test_row_order_does_not_change_predictions():
    rng = np.random.default_rng(3)
    X = rng.random((30, 3))
    y = (X[:, 0] + X[:, 1] > 1).astype(int) + (X[:, 2] > 0.7)
    probe = rng.random((50, 3))
    perm = rng.permutation(30)
    a = train_svm(Dataset(X, y), QUAD)
    b = train_svm(Dataset(X[perm], y[perm]), QUAD)
    assert predict_labels(a, probe) == predict_labels(b, probe)


def test_support_vector_inside_margin_predicts_its_class():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [0.9, 1.0], [1.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    model = train_svm(Dataset(X, y), LIN)
    for x, lab in zip(X, y):
        assert predict(model, x)[0] == lab


def test_two_class_vote_is_sign_of_decision():
    rng = np.random.default_rng(5)
    X = rng.random((20, 2))
    y = (X[:, 0] > 0.5).astype(int)
    model = train_svm(Dataset(X, y), QUAD)
    probe = rng.random((30, 2))
    dv = decision_values(model, probe)[:, 0]
    assert predict_labels(model, probe) == [0 if v > 0 else 1 for v in dv]


def test_wrong_length_is_input_error():
    model = train_svm(Dataset(XOR_X, [0, 0, 1, 1]), QUAD)
    with pytest.raises(InputError):
        predict(model, np.zeros(3))


# -- kNN ---------------------------------------------------------------------------

def test_knn_exact_match():
    X = np.array([[0.0], [1.0], [2.0]])
    m = train_knn(Dataset(X, [4, 5, 6]), 1)
    assert predict_labels(m, [[1.0]]) == [5]


def test_knn_majority():
    X = np.array([[0.0], [0.1], [0.2], [5.0]])
    m = train_knn(Dataset(X, [1, 1, 2, 2]), 3)
    assert predict_labels(m, [[0.1]]) == [1]


def test_weighted_knn_prefers_nearer():
    X = np.array([[0.0], [1.0]])
    y = [1, 2]
    q = [[0.9]]
    assert predict_labels(train_knn(Dataset(X, y), 2), q) == [1]  # tie -> smaller label
    assert predict_labels(train_knn(Dataset(X, y), 2, weighted=True), q) == [2]


def test_knn_bad_k():
    with pytest.raises(InvalidArgumentError):
        train_knn(Dataset(XOR_X, [0, 0, 1, 1]), 0)


def test_knn_all_rows_predicts_global_majority():
    rng = np.random.default_rng(2)
    X = rng.random((9, 2))
    y = np.array([0, 1, 1, 2, 1, 0, 1, 2, 2])
    m = train_knn(Dataset(X, y), 9)
    assert set(predict_labels(m, rng.random((20, 2)))) == {1}


# -- tree ---------------------------------------------------------------------------

def test_gini_half():
    assert gini(np.array([5, 5])) == pytest.approx(0.5)


def test_pure_dataset_single_leaf():
    m = train_tree(Dataset(XOR_X, [3, 3, 3, 3]), 5)
    assert len(m.tree) == 1 and accuracy(m, Dataset(XOR_X, [3, 3, 3, 3])) == 1.0


def test_threshold_data_depth_one():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    d = Dataset(X, [0, 0, 1, 1])
    m = train_tree(d, 5)
    assert len(m.tree) == 3 and m.tree[0]["threshold"] == 1.5
    assert accuracy(m, d) == 1.0


@settings(max_examples=30, deadline=None)
@given(rng=labelled)
def test_tree_accuracy_non_decreasing_in_depth(rng):
    X = rng.random((40, 3))
    y = rng.integers(0, 3, 40)
    d = Dataset(X, y)
    accs = [accuracy(train_tree(d, depth), d) for depth in range(0, 7)]
    assert all(b >= a for a, b in zip(accs, accs[1:]))


def test_tree_honours_min_leaf():
    rng = np.random.default_rng(8)
    d = Dataset(rng.random((30, 2)), rng.integers(0, 2, 30))
    m = train_tree(d, 10, min_leaf=5)
    reached = {}
    for x in d.X:
        k = 0
        while "feature" in m.tree[k]:
            node = m.tree[k]
            k = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
        reached[k] = reached.get(k, 0) + 1
    assert min(reached.values()) >= 5


# -- model selection ----------------------------------------------------------------

def test_grid_search_single_point():
    d = Dataset(np.random.default_rng(0).random((20, 2)), np.arange(20) % 2)
    assert grid_search_cv(d, [QUAD]) == QUAD


def test_grid_search_ties_go_first():
    d = Dataset(np.random.default_rng(0).random((20, 2)), np.arange(20) % 2)
    h1 = Hyperparams(kernel="linear", C=1.0)
    h2 = Hyperparams(kernel="linear", C=1.0, coef0=0.5)  # same model, distinct object
    assert grid_search_cv(d, [h1, h2]) is h1


def test_grid_search_empty():
    with pytest.raises(InvalidArgumentError):
        grid_search_cv(Dataset(XOR_X, [0, 0, 1, 1]), [])


def test_grid_search_reproducible_on_corpus(default_corpus):
    from streamtune.harness import EvalOptions, fit_model
    c = default_corpus
    ids = [w.sample_id for w in c.samples_of(c.program_ids("train")[:12])]
    model, _ = fit_model(c, ids, EvalOptions(), seed=0)
    X = np.array([model.scaling.mins])  # only to build the dataset shape
    assert X.shape[1] == len(model.feature_names)
    from streamtune.features import apply_scaler, vectorise
    Xs = np.array([apply_scaler(model.scaling, vectorise(c.features[s], model.feature_names))
                   for s in ids])
    y = np.array(predict_labels(model, Xs))
    d = Dataset(Xs, y)
    picks = {grid_search_cv(d, default_grid("svm-quad"), seed=4).C for _ in range(2)}
    assert len(picks) == 1


# -- serialisation ------------------------------------------------------------------

@pytest.mark.parametrize("h", [QUAD, LIN, Hyperparams(kernel="gaussian", gamma=2.0),
                               Hyperparams(kind="knn", knn_k=3), Hyperparams(kind="wknn", knn_k=2),
                               Hyperparams(kind="tree", tree_max_depth=4)])
def test_round_trip_bit_exact(tmp_path, h):
    rng = np.random.default_rng(6)
    X = rng.random((30, 4))
    y = np.arange(30) % 3
    m = train(Dataset(X, y, feature_names=list("abcd")), h)
    m.label_configs = {0: StreamConfig(1, 1), 1: StreamConfig(4, 16), 2: StreamConfig(8, 64)}
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    probe = rng.random((100, 4))
    assert predict_labels(back, probe) == predict_labels(m, probe)
    if h.kind == "svm":
        assert np.array_equal(decision_values(back, probe), decision_values(m, probe))
    assert predict(back, probe[0]) == predict(m, probe[0])


def test_unknown_model_version():
    m = train_svm(Dataset(XOR_X, [0, 0, 1, 1]), QUAD)
    d = model_to_dict(m)
    d["version"] = "2"
    with pytest.raises(InputError):
        model_from_dict(d)


def test_hyperparam_validation():
    with pytest.raises(InvalidArgumentError):
        Hyperparams(C=0)
    with pytest.raises(InvalidArgumentError):
        Hyperparams(knn_k=11)
    with pytest.raises(InvalidArgumentError):
        Hyperparams.for_learner("ann")
