"""Multi-class classifiers over scaled feature vectors.

SVMs are one-vs-one C-SVC machines solved by SMO (maximal violating pair,
tolerance 1e-3). kNN, distance-weighted kNN and a Gini CART tree share the
same :class:`TrainedModel` container and JSON model format.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import _backend
from .errors import ConvergenceError, DegenerateDatasetError, InputError, InvalidArgumentError
from .features import ScalingParams, apply_scaler
from .simulator import StreamConfig

MODEL_VERSION = "1"
SMO_TOL = 1e-3
SMO_MIN_ITER = 10_000_000

LEARNERS = {
    "svm-quad": ("svm", "quadratic"),
    "svm-lin": ("svm", "linear"),
    "svm-rbf": ("svm", "gaussian"),
    "knn": ("knn", None),
    "wknn": ("wknn", None),
    "tree": ("tree", None),
}


@dataclass(frozen=True)
class Hyperparams:
    kind: str = "svm"  # svm | knn | wknn | tree
    kernel: str = "quadratic"  # linear | quadratic | gaussian
    C: float = 10.0
    gamma: float = 1.0
    coef0: float = 1.0
    knn_k: int = 3
    tree_max_depth: int = 8
    tree_min_leaf: int = 1

    def __post_init__(self):
        if self.kind not in ("svm", "knn", "wknn", "tree"):
            raise InvalidArgumentError(f"unknown learner kind {self.kind!r}")
        if self.kernel not in ("linear", "quadratic", "gaussian"):
            raise InvalidArgumentError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0 or not self.gamma > 0 or self.coef0 < 0:
            raise InvalidArgumentError("need C > 0, gamma > 0, coef0 >= 0")
        if not 1 <= self.knn_k <= 10:
            raise InvalidArgumentError(f"knn_k must be in 1..10, got {self.knn_k}")
        if self.tree_max_depth < 0 or self.tree_min_leaf < 1:
            raise InvalidArgumentError("need tree_max_depth >= 0 and tree_min_leaf >= 1")

    @classmethod
    def for_learner(cls, name, **overrides):
        try:
            kind, kernel = LEARNERS[name]
        except KeyError:
            raise InvalidArgumentError(f"unknown learner {name!r}") from None
        return cls(kind=kind, kernel=kernel or "quadratic", **overrides)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray  # integer label ids
    metas: list = field(default_factory=list)
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidArgumentError("X and y differ in length")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        metas = [self.metas[i] for i in idx] if self.metas else []
        return Dataset(self.X[idx], self.y[idx], metas, list(self.feature_names))


@dataclass
class BinaryMachine:
    labels: tuple  # (positive, negative)
    support_vectors: np.ndarray
    coef: np.ndarray  # alpha_i * y_i
    bias: float
    kkt_gap: float = 0.0


@dataclass
class TrainedModel:
    kind: str
    hyperparams: Hyperparams
    labels: list
    label_configs: dict = field(default_factory=dict)  # label -> StreamConfig
    scaling: ScalingParams | None = None
    feature_names: list = field(default_factory=list)
    machines: list = field(default_factory=list)
    memory_X: np.ndarray | None = None
    memory_y: np.ndarray | None = None
    tree: list = field(default_factory=list)

    @property
    def dim(self):
        if self.kind == "svm":
            return self.machines[0].support_vectors.shape[1] if self.machines else None
        if self.kind in ("knn", "wknn"):
            return self.memory_X.shape[1]
        return len(self.feature_names) or None


def kernel_matrix(A, B, h):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if h.kernel == "linear":
        return A @ B.T
    if h.kernel == "quadratic":
        return (h.gamma * (A @ B.T) + h.coef0) ** 2
    sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-h.gamma * np.maximum(sq, 0.0))


def _canonical_order(X, y):
    keys = [X[:, j] for j in range(X.shape[1] - 1, -1, -1)] + [y]
    return np.lexsort(keys)


def _rho(alpha, G, y, C):
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].sum() / free.sum())
    ub, lb = np.inf, -np.inf
    for a, yy, g in zip(alpha, y, yG):
        at_upper = a >= C
        at_lower = a <= 0
        if (at_upper and yy < 0) or (at_lower and yy > 0):
            ub = min(ub, g)
        else:
            lb = max(lb, g)
    return float((ub + lb) / 2)


def _kkt_gap(alpha, G, y, C):
    yG = -y * G
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return float(yG[up].max() - yG[low].min())


def smo_max_iter(n):
    """Update budget: ``10 * n**2``, but never below ``SMO_MIN_ITER``.

    Rows of one program sit almost on a line, so Q is close to singular and
    large C values need far more than ``10 * n**2`` updates.
    """
    return max(SMO_MIN_ITER, 10 * n * n)


def train_binary(X, y, h, max_iter=None):
    """Solve one C-SVC dual; ``y`` in {-1, +1}."""
    n = X.shape[0]
    K = kernel_matrix(X, X, h)
    Q = (y[:, None] * y[None, :]) * K
    max_iter = smo_max_iter(n) if max_iter is None else max_iter
    alpha, G, iters, converged = _backend.smo_solve(Q, y.astype(float), float(h.C), SMO_TOL, max_iter)
    if not converged:
        raise ConvergenceError(f"SMO did not converge in {max_iter} iterations ({n} rows)")
    rho = _rho(alpha, G, y, h.C)
    sv = alpha > 0
    return X[sv].copy(), (alpha * y)[sv], -rho, _kkt_gap(alpha, G, y, h.C)


def _require_labels(d):
    labels = sorted(set(int(v) for v in d.y))
    if len(labels) < 2:
        raise DegenerateDatasetError("training data needs at least two distinct labels")
    return labels


def train_svm(d, h, max_iter=None):
    """One-vs-one SVM. Rows are put in a canonical order first, so the model
    does not depend on the order rows arrive in."""
    labels = _require_labels(d)
    order = _canonical_order(d.X, d.y)
    X, y = d.X[order], d.y[order]
    machines = []
    for a, b in combinations(labels, 2):
        mask = (y == a) | (y == b)
        yy = np.where(y[mask] == a, 1.0, -1.0)
        sv, coef, bias, gap = train_binary(X[mask], yy, h, max_iter)
        machines.append(BinaryMachine((a, b), sv, coef, bias, gap))
    return TrainedModel("svm", h, labels, machines=machines,
                        feature_names=list(d.feature_names))


def train_knn(d, k, weighted=False):
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if k > len(d):
        raise InvalidArgumentError(f"k={k} exceeds {len(d)} rows")
    kind = "wknn" if weighted else "knn"
    labels = sorted(set(int(v) for v in d.y))
    return TrainedModel(kind, Hyperparams(kind=kind, knn_k=k), labels,
                        memory_X=d.X.copy(), memory_y=d.y.copy(),
                        feature_names=list(d.feature_names))


def gini(counts):
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p**2).sum())


def _majority(y, labels):
    counts = np.array([(y == lab).sum() for lab in labels])
    return labels[int(np.argmax(counts))]


def _best_split(X, y, labels, min_leaf):
    n, d = X.shape
    onehot = (y[:, None] == np.asarray(labels)[None, :]).astype(float)
    best = None  # (impurity, feature, threshold)
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)
        total = left_counts[-1]
        cut = np.flatnonzero(xs[1:] > xs[:-1])  # last index of left side
        if cut.size == 0:
            continue
        n_left = cut + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        cut, n_left, n_right = cut[ok], n_left[ok], n_right[ok]
        lc = left_counts[cut]
        rc = total - lc
        g_left = 1.0 - ((lc / n_left[:, None]) ** 2).sum(axis=1)
        g_right = 1.0 - ((rc / n_right[:, None]) ** 2).sum(axis=1)
        impurity = (n_left * g_left + n_right * g_right) / n
        i = int(np.argmin(impurity))
        thr = (xs[cut[i]] + xs[cut[i] + 1]) / 2.0
        if best is None or impurity[i] < best[0]:
            best = (float(impurity[i]), f, float(thr))
    return best


def train_tree(d, max_depth, min_leaf=1):
    """Binary CART with Gini impurity; splits at midpoints of sorted unique values."""
    if len(d) == 0:
        raise InvalidArgumentError("cannot grow a tree on an empty dataset")
    labels = sorted(set(int(v) for v in d.y))
    nodes = []

    def grow(idx, depth):
        node_id = len(nodes)
        X, y = d.X[idx], d.y[idx]
        nodes.append({"label": int(_majority(y, labels))})
        counts = np.array([(y == lab).sum() for lab in labels], dtype=float)
        parent = gini(counts)
        if depth >= max_depth or parent == 0.0 or len(idx) < 2 * min_leaf:
            return node_id
        split = _best_split(X, y, labels, min_leaf)
        if split is None or split[0] >= parent:
            return node_id
        _, f, thr = split
        go_left = X[:, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[node_id].update(feature=int(f), threshold=thr, left=left, right=right)
        return node_id

    grow(np.arange(len(d)), 0)
    h = Hyperparams(kind="tree", tree_max_depth=max_depth, tree_min_leaf=min_leaf)
    return TrainedModel("tree", h, labels, tree=nodes, feature_names=list(d.feature_names))


def train(d, h):
    """Train the learner named by ``h.kind``."""
    if h.kind == "svm":
        return train_svm(d, h)
    if h.kind in ("knn", "wknn"):
        model = train_knn(d, min(h.knn_k, len(d)), weighted=h.kind == "wknn")
        model.hyperparams = h
        return model
    model = train_tree(d, h.tree_max_depth, h.tree_min_leaf)
    model.hyperparams = h
    return model


def _check_dim(m, X):
    dim = m.dim
    if dim is not None and X.shape[1] != dim:
        raise InputError(f"expected vectors of length {dim}, got {X.shape[1]}")


def decision_values(m, X):
    """Per-machine decision values, shape (rows, machines)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dim(m, X)
    out = np.empty((X.shape[0], len(m.machines)))
    for k, mach in enumerate(m.machines):
        K = kernel_matrix(X, mach.support_vectors, m.hyperparams)
        out[:, k] = K @ mach.coef + mach.bias
    return out


def _vote(m, X):
    dv = decision_values(m, X)
    pos = {lab: i for i, lab in enumerate(m.labels)}
    votes = np.zeros((X.shape[0], len(m.labels)), dtype=np.int64)
    for k, mach in enumerate(m.machines):
        a, b = mach.labels
        winner = np.where(dv[:, k] > 0, pos[a], pos[b])
        np.add.at(votes, (np.arange(X.shape[0]), winner), 1)
    return [m.labels[int(i)] for i in np.argmax(votes, axis=1)]


def _knn_labels(m, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dim(m, X)
    k = m.hyperparams.knn_k
    k = min(k, m.memory_X.shape[0])
    out = []
    for x in X:
        dist = np.sqrt(((m.memory_X - x) ** 2).sum(axis=1))
        nearest = np.argsort(dist, kind="stable")[:k]
        score = {}
        for i in nearest:
            w = 1.0 / (dist[i] + 1e-12) if m.kind == "wknn" else 1.0
            lab = int(m.memory_y[i])
            score[lab] = score.get(lab, 0.0) + w
        out.append(min(score, key=lambda lab: (-score[lab], lab)))
    return out


def _tree_labels(m, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = []
    for x in X:
        node = m.tree[0]
        while "feature" in node:
            node = m.tree[node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]]
        out.append(int(node["label"]))
    return out


def predict_labels(m, X):
    """Predicted label ids for already-scaled rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if m.kind == "svm":
        return _vote(m, X)
    if m.kind in ("knn", "wknn"):
        return _knn_labels(m, X)
    if m.feature_names and X.shape[1] != len(m.feature_names):
        raise InputError(f"expected vectors of length {len(m.feature_names)}, got {X.shape[1]}")
    return _tree_labels(m, X)


def predict(m, x):
    """(label, config) for one scaled vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("predict takes a single 1-D vector")
    label = predict_labels(m, x[None, :])[0]
    return label, m.label_configs.get(label)


def predict_unscaled(m, candidates):
    """Predict from a candidate-feature dict, scaling with the embedded params."""
    names = m.scaling.names if m.scaling else m.feature_names
    missing = [n for n in names if n not in candidates]
    if missing:
        raise InputError(f"missing features: {', '.join(missing)}")
    x = np.array([candidates[n] for n in names], dtype=float)
    if m.scaling is not None:
        x = apply_scaler(m.scaling, x)
    return predict(m, x)


def accuracy(m, d):
    if len(d) == 0:
        return 0.0
    return float(np.mean(np.asarray(predict_labels(m, d.X)) == d.y))


def stratified_folds(y, folds, seed):
    """Fold index per row: labels are shuffled separately and dealt round-robin."""
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=np.int64)
    offset = 0
    for lab in sorted(set(int(v) for v in y)):
        idx = np.flatnonzero(y == lab)
        idx = idx[rng.permutation(len(idx))]
        assign[idx] = (offset + np.arange(len(idx))) % folds
        offset += len(idx)
    return assign


def _fold_accuracy(d, h, train_idx, test_idx):
    tr, te = d.subset(train_idx), d.subset(test_idx)
    try:
        model = train(tr, h)
    except DegenerateDatasetError:
        return float(np.mean(te.y == tr.y[0]))
    return accuracy(model, te)


def grid_search_cv(d, grid, folds=5, seed=0):
    """Hyperparams with the best mean fold accuracy; ties go to the earlier grid point."""
    grid = list(grid)
    if not grid:
        raise InvalidArgumentError("hyperparameter grid is empty")
    if folds < 2:
        raise InvalidArgumentError("folds must be >= 2")
    assign = stratified_folds(d.y, folds, seed)
    best, best_score = None, -1.0
    for h in grid:
        scores = []
        for f in range(folds):
            test_idx = np.flatnonzero(assign == f)
            train_idx = np.flatnonzero(assign != f)
            if len(test_idx) == 0 or len(train_idx) == 0:
                continue
            scores.append(_fold_accuracy(d, h, train_idx, test_idx))
        score = float(np.mean(scores)) if scores else 0.0
        if score > best_score:
            best, best_score = h, score
    return best


def default_grid(learner="svm-quad"):
    kind, _ = LEARNERS[learner]
    if kind == "svm":
        return [Hyperparams.for_learner(learner, C=c) for c in (0.1, 1.0, 10.0, 100.0)]
    if kind in ("knn", "wknn"):
        return [Hyperparams.for_learner(learner, knn_k=k) for k in range(1, 11)]
    return [Hyperparams.for_learner(learner, tree_max_depth=dd) for dd in (2, 4, 6, 8, 12)]


# -- serialisation ---------------------------------------------------------

def model_to_dict(m):
    d = {
        "version": MODEL_VERSION,
        "kind": m.kind,
        "hyperparams": m.hyperparams.to_dict(),
        "labels": [int(v) for v in m.labels],
        "label_configs": [
            {"label": int(k), "partitions": c.partitions, "tasks": c.tasks}
            for k, c in sorted(m.label_configs.items())
        ],
        "scaling": m.scaling.to_dict() if m.scaling else None,
        "feature_names": list(m.feature_names),
    }
    if m.kind == "svm":
        d["machines"] = [
            {"labels": [int(v) for v in mach.labels],
             "support_vectors": mach.support_vectors.tolist(),
             "coef": mach.coef.tolist(), "bias": float(mach.bias),
             "kkt_gap": float(mach.kkt_gap)}
            for mach in m.machines
        ]
    elif m.kind in ("knn", "wknn"):
        d["memory_X"] = m.memory_X.tolist()
        d["memory_y"] = [int(v) for v in m.memory_y]
    else:
        d["tree"] = m.tree
    return d


def model_from_dict(d):
    if str(d.get("version")) != MODEL_VERSION:
        raise InputError(f"unsupported model version {d.get('version')!r}")
    h = Hyperparams(**d["hyperparams"])
    m = TrainedModel(d["kind"], h, list(d["labels"]),
                     label_configs={e["label"]: StreamConfig(e["partitions"], e["tasks"])
                                    for e in d["label_configs"]},
                     scaling=ScalingParams.from_dict(d["scaling"]) if d.get("scaling") else None,
                     feature_names=list(d.get("feature_names", [])))
    if m.kind == "svm":
        for e in d["machines"]:
            sv = np.array(e["support_vectors"], dtype=float).reshape(len(e["coef"]), -1)
            m.machines.append(BinaryMachine(tuple(e["labels"]), sv, np.array(e["coef"], dtype=float),
                                            float(e["bias"]), float(e.get("kkt_gap", 0.0))))
    elif m.kind in ("knn", "wknn"):
        m.memory_X = np.array(d["memory_X"], dtype=float)
        m.memory_y = np.array(d["memory_y"], dtype=np.int64)
    else:
        m.tree = d["tree"]
    return m


def save_model(m, path):
    Path(path).write_text(json.dumps(model_to_dict(m), indent=1) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
