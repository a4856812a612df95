"""Evaluation harness: cross-validation, scheme comparison and reports.

Every fold refits feature pruning, scaling, labelling and the classifier on
its own training samples. Fold manifests record exactly which samples fed
each step so leakage can be audited after the fact.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines
from .corpus import comm_compute_ratio
from .errors import InsufficientDataError, InvalidArgumentError
from .features import apply_scaler, fit_scaler, select_features, vectorise
from .labeling import (TOP_PCT, W_SAME_DATASET, W_SAME_PROGRAM, label_to_config, merge_labels,
                       raw_labels, well_performing_set)
from .learner import Dataset, Hyperparams, grid_search_cv, predict_labels, train
from .learner import default_grid as default_hp_grid
from .simulator import StreamConfig, anneal_search, derive_seed, oracle_best, snap_to_grid

FIXED_A = StreamConfig(4, 16)
FIXED_B = StreamConfig(17, 85)
ANNEAL_BUDGET = 500
SCHEMES = ("predicted", "fixed-4-16", "fixed-17-85", "liu", "werkhoven", "anneal", "oracle")


@dataclass(frozen=True)
class EvalOptions:
    learner: str = "svm-quad"
    hyperparams: Hyperparams | None = None
    tune: bool = False  # grid-search hyperparameters inside each fold
    top_pct: float = TOP_PCT
    target_nr: int = 28
    w2: float = W_SAME_PROGRAM
    w3: float = W_SAME_DATASET
    merge: bool = True

    def hp(self):
        return self.hyperparams or Hyperparams.for_learner(self.learner)


@dataclass
class FoldManifest:
    fold: int
    held_out: list
    train_samples: list
    features: list
    scaler_digest: str
    class_count: int
    seed: int

    def to_dict(self):
        return dict(vars(self))


@dataclass(frozen=True)
class Row:
    scheme: str
    program: str
    dataset: str
    config: StreamConfig
    speedup: float
    oracle_config: StreamConfig
    oracle_speedup: float
    pct_of_oracle: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    manifests: list = field(default_factory=list)
    correlation: float | None = None

    def schemes(self):
        seen = []
        for r in self.rows:
            if r.scheme not in seen:
                seen.append(r.scheme)
        return seen

    def rows_for(self, scheme):
        return [r for r in self.rows if r.scheme == scheme]

    def geomeans(self):
        return {s: geomean([r.speedup for r in self.rows_for(s)]) for s in self.schemes()}

    def pct_geomeans(self):
        return {s: geomean([r.pct_of_oracle for r in self.rows_for(s)]) for s in self.schemes()}

    def predictions(self, scheme="predicted"):
        return {f"{r.program}/{r.dataset}": r.config for r in self.rows_for(scheme)}

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scheme", "program", "dataset", "partitions", "tasks", "speedup", "pct_of_oracle"])
        for r in self.rows:
            writer.writerow([r.scheme, r.program, r.dataset, r.config.partitions, r.config.tasks,
                             repr(r.speedup), repr(r.pct_of_oracle)])
        return buf.getvalue()

    def summary(self):
        return {
            "geomean_speedup": {k: repr(v) for k, v in self.geomeans().items()},
            "geomean_pct_of_oracle": {k: repr(v) for k, v in self.pct_geomeans().items()},
            "rows": len(self.rows),
            "correlation": None if self.correlation is None else repr(self.correlation),
            "folds": [m.to_dict() for m in self.manifests],
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=1, sort_keys=True) + "\n"

    def speedup_distribution_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scheme", "speedup"])
        for r in self.rows:
            writer.writerow([r.scheme, repr(r.speedup)])
        return buf.getvalue()


def geomean(values):
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise InvalidArgumentError("geomean of an empty sequence")
    if np.any(~(v > 0)):
        raise InvalidArgumentError("geomean needs strictly positive values")
    return float(np.exp(np.mean(np.log(v))))


def _row(scheme, w, surface, config):
    oc, osp = oracle_best(surface)
    runtime = surface.runtime(config)
    return Row(scheme, w.program_id, w.dataset_id, config, surface.baseline_runtime / runtime,
               oc, osp, surface.runtime(oc) / runtime)


# -- training --------------------------------------------------------------

def fit_model(corpus, train_ids, opts=None, seed=0):
    """Fit pruning, scaling, labels and classifier on ``train_ids`` only.

    Returns ``(model, manifest_fields)``.
    """
    opts = opts or EvalOptions()
    if not train_ids:
        raise InsufficientDataError("no training samples")
    rows = [corpus.features[s] for s in train_ids]
    names = select_features(rows)
    X_raw = np.array([vectorise(r, names) for r in rows])
    scaler = fit_scaler(X_raw, names)
    X = np.array([apply_scaler(scaler, x) for x in X_raw])

    by_id = {m.sample_id: m for m in corpus.metas()}
    metas = [by_id[s] for s in train_ids]
    surfaces = {s: corpus.surfaces[s] for s in train_ids}
    if opts.merge:
        labelsets = [well_performing_set(surfaces[s], opts.top_pct) for s in train_ids]
        result = merge_labels(labelsets, metas, opts.target_nr, surfaces, opts.w2, opts.w3)
    else:
        result = raw_labels(surfaces, metas)
    y = np.array([result.assignments[s] for s in train_ids])
    data = Dataset(X, y, metas, names)

    hp = opts.hp()
    if len(set(y.tolist())) < 2:
        hp = replace(Hyperparams.for_learner("knn"), knn_k=1)
    elif opts.tune:
        hp = grid_search_cv(data, default_hp_grid(opts.learner), folds=5, seed=seed)
    model = train(data, hp)
    model.scaling = scaler
    model.feature_names = list(names)
    model.label_configs = {lab: label_to_config(lab, result) for lab in result.classes}
    digest = hashlib.sha256(json.dumps(scaler.to_dict(), sort_keys=True).encode()).hexdigest()[:16]
    return model, {"features": list(names), "scaler_digest": digest,
                   "class_count": result.class_count}


def predict_config(model, candidates):
    x = apply_scaler(model.scaling, vectorise(candidates, model.feature_names))
    label = predict_labels(model, x[None, :])[0]
    return model.label_configs[label]


def _evaluate_samples(corpus, model, workloads):
    out = []
    for w in workloads:
        s = corpus.surfaces[w.sample_id]
        out.append(_row("predicted", w, s, predict_config(model, corpus.features[w.sample_id])))
    return out


def loocv_folds(corpus):
    """``(held_out_program, excluded_programs)`` per train-suite program."""
    programs = corpus.program_ids("train")
    if len(programs) < 2:
        raise InsufficientDataError("LOOCV needs at least two train-suite programs")
    folds = []
    for p in programs:
        fam = corpus.family_of(p)
        excluded = [q for q in programs if corpus.family_of(q) == fam]
        folds.append((p, excluded))
    return folds


def loocv_evaluate(corpus, opts=None, seed=0):
    """Leave one program (and its family) out; refit everything per fold."""
    opts = opts or EvalOptions()
    report = EvalReport()
    train_all = [w.sample_id for w in corpus.samples_of(corpus.program_ids("train"))]
    for k, (held, excluded) in enumerate(loocv_folds(corpus)):
        drop = set(excluded)
        train_ids = [s for s in train_all if s.split("/", 1)[0] not in drop]
        fold_seed = derive_seed(seed, k)
        if not train_ids:
            continue
        model, info = fit_model(corpus, train_ids, opts, fold_seed)
        report.rows.extend(_evaluate_samples(corpus, model, corpus.samples_of([held])))
        report.manifests.append(FoldManifest(k, [held], train_ids, info["features"],
                                             info["scaler_digest"], info["class_count"], fold_seed))
    return report


def cross_suite_evaluate(corpus, opts=None, seed=0):
    """Train on the train suite, evaluate on every test-suite sample."""
    opts = opts or EvalOptions()
    train_ids = [w.sample_id for w in corpus.samples_of(corpus.program_ids("train"))]
    fold_seed = derive_seed(seed, 0)
    model, info = fit_model(corpus, train_ids, opts, fold_seed)
    report = EvalReport()
    report.rows.extend(_evaluate_samples(corpus, model, corpus.samples_of(corpus.program_ids("test"))))
    report.manifests.append(FoldManifest(0, corpus.program_ids("test"), train_ids, info["features"],
                                         info["scaler_digest"], info["class_count"], fold_seed))
    return report


def compare_schemes(corpus, predictions, seed=0, anneal_budget=ANNEAL_BUDGET):
    """Speedups of every scheme on the samples in ``predictions``.

    ``predictions`` maps sample_id to the learned config (for example
    ``EvalReport.predictions()``).
    """
    grid = corpus.grid()
    fixed_a, fixed_b = snap_to_grid(FIXED_A, grid), snap_to_grid(FIXED_B, grid)
    report = EvalReport()
    by_id = {w.sample_id: (i, w) for i, w in enumerate(corpus.workloads)}
    for sid, config in predictions.items():
        i, w = by_id[sid]
        s = corpus.surfaces[sid]
        annealed, _ = anneal_search(w, grid, anneal_budget, derive_seed(seed, 0xA22E, i))
        for scheme, c in (
            ("predicted", config),
            ("fixed-4-16", fixed_a),
            ("fixed-17-85", fixed_b),
            ("liu", baselines.liu_for_workload(w, grid)),
            ("werkhoven", baselines.werkhoven_for_workload(w, grid)),
            ("anneal", annealed),
            ("oracle", oracle_best(s)[0]),
        ):
            report.rows.append(_row(scheme, w, s, c))
    report.rows.sort(key=lambda r: (SCHEMES.index(r.scheme), r.program, r.dataset))
    return report


@dataclass
class Correlation:
    r: float
    x: list  # ln(compute / communication) at (1,1)
    y: list  # achieved speedup
    flagged: bool = False

    def scatter_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["log_ratio", "speedup"])
        for a, b in zip(self.x, self.y):
            writer.writerow([repr(a), repr(b)])
        return buf.getvalue()


def pearson(x, y):
    """Pearson r; ``(0.0, True)`` when either axis has no variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise InsufficientDataError("correlation needs at least two samples")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        return 0.0, True
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0)), False


def ratio_speedup_correlation(corpus, report, scheme="predicted"):
    by_id = {w.sample_id: w for w in corpus.workloads}
    rows = report.rows_for(scheme)
    x = [math.log(comm_compute_ratio(by_id[f"{r.program}/{r.dataset}"])) for r in rows]
    y = [r.speedup for r in rows]
    r, flagged = pearson(x, y)
    return Correlation(r, x, y, flagged)


@dataclass
class Ablation:
    merged: EvalReport
    unmerged: EvalReport

    @property
    def delta(self):
        return self.merged.geomeans()["predicted"] / self.unmerged.geomeans()["predicted"] - 1.0


def merging_ablation(corpus, opts=None, seed=0):
    """Same folds and seeds, once with merged labels and once with raw labels."""
    opts = opts or EvalOptions()
    return Ablation(loocv_evaluate(corpus, replace(opts, merge=True), seed),
                    loocv_evaluate(corpus, replace(opts, merge=False), seed))


def heatmap_csv(surface):
    return surface.heatmap_csv()
