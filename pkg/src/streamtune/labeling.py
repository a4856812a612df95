"""Classification labels from performance surfaces.

Each training sample contributes the set of its best configurations. Samples
are then merged pairwise by similarity weight until the surviving classes
have pairwise disjoint configuration sets and there are few enough of them.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .simulator import oracle_best

TOP_PCT = 3.0
W_SAME_PROGRAM = 150
W_SAME_DATASET = 30


@dataclass(frozen=True)
class SampleMeta:
    sample_id: str
    program_id: str
    dataset_id: str


@dataclass(frozen=True)
class LabelSet:
    sample_id: str
    configs: frozenset


@dataclass
class MergeResult:
    assignments: dict  # sample_id -> label id
    classes: dict  # label id -> frozenset of representative configs
    members: dict  # label id -> list of sample ids
    scores: dict = field(default_factory=dict)  # label id -> {config: mean normalised perf}
    merges: int = 0
    target_met: bool = True

    @property
    def class_count(self):
        return len(self.classes)


def well_performing_set(s, top_pct=TOP_PCT):
    """The ceil(top_pct% of grid) fastest configs; ties by lexicographic order."""
    ranked = sorted(s.records, key=lambda c: (s.records[c].runtime, c))
    k = max(1, math.ceil(top_pct * len(ranked) / 100.0 - 1e-9))
    return LabelSet(s.workload.sample_id, frozenset(ranked[:k]))


def _normalised_perf(surface):
    best, _ = oracle_best(surface)
    fastest = surface.records[best].runtime
    return {c: fastest / r.runtime for c, r in surface.records.items()}


def _best_in(configs, member_ids, perf):
    """Config of ``configs`` with the highest mean normalised performance."""
    def mean_perf(c):
        if not perf:
            return 0.0
        return float(np.mean([perf[s].get(c, 0.0) for s in member_ids]))
    return min(configs, key=lambda c: (-mean_perf(c), c)), mean_perf


def merge_labels(labelsets, metas, target_nr, surfaces=None,
                 w2=W_SAME_PROGRAM, w3=W_SAME_DATASET):
    """Merge per-sample label sets into at most ``target_nr`` classes.

    One top-weighted pair merges per step and weights are recomputed. The
    weight of a pair is the size of the overlap of their representative sets,
    plus ``w2`` when they share a program and ``w3`` when they share a
    dataset. Merging stops once representative sets are pairwise disjoint and
    the class count is at most ``target_nr``, or when no pair has positive
    weight (``target_met`` is then False if the count is still too high).

    ``surfaces`` (sample_id -> PerfSurface) breaks the empty-intersection
    fallback by oracle speedup and ranks representatives; without it the
    lexicographically smallest config wins.
    """
    if target_nr < 1:
        raise InvalidArgumentError(f"target_nr must be >= 1, got {target_nr}")
    if len(labelsets) != len(metas) or not labelsets:
        raise InvalidArgumentError("need one meta per label set and at least one sample")
    meta_by_id = {m.sample_id: m for m in metas}
    ids = [ls.sample_id for ls in labelsets]
    if len(set(ids)) != len(ids):
        raise InvalidArgumentError("duplicate sample ids")
    pairs = {(meta_by_id[i].program_id, meta_by_id[i].dataset_id) for i in ids}
    if len(pairs) != len(ids):
        raise InvalidArgumentError("(program_id, dataset_id) must be unique per sample")

    perf = {sid: _normalised_perf(surfaces[sid]) for sid in ids} if surfaces else {}
    speed = {sid: oracle_best(surfaces[sid])[1] for sid in ids} if surfaces else {}

    n = len(ids)
    reps = [frozenset(ls.configs) for ls in labelsets]
    progs = [{meta_by_id[s].program_id} for s in ids]
    dsets = [{meta_by_id[s].dataset_id} for s in ids]
    members = [[s] for s in ids]
    class_speed = [speed.get(s, 1.0) for s in ids]
    active = np.ones(n, dtype=bool)

    weight = np.full((n, n), -np.inf)
    overlap = np.zeros((n, n), dtype=np.int64)

    def refresh(a):
        for b in range(n):
            if b == a or not active[b]:
                continue
            o = len(reps[a] & reps[b])
            w = o + (w2 if progs[a] & progs[b] else 0) + (w3 if dsets[a] & dsets[b] else 0)
            lo, hi = min(a, b), max(a, b)
            weight[lo, hi] = w
            overlap[lo, hi] = o

    for a in range(n):
        refresh(a)

    merges = 0
    while True:
        count = int(active.sum())
        if count <= 1:
            break
        live = np.isfinite(weight)
        disjoint = not np.any(overlap[live] > 0)
        if disjoint and count <= target_nr:
            break
        flat = int(np.argmax(weight))
        a, b = divmod(flat, n)
        if not weight[a, b] > 0:
            break
        inter = reps[a] & reps[b]
        if inter:
            new_rep = inter
        else:
            keep = a if class_speed[a] >= class_speed[b] else b
            best, _ = _best_in(reps[keep], members[keep], perf)
            new_rep = frozenset([best])
        reps[a] = new_rep
        progs[a] |= progs[b]
        dsets[a] |= dsets[b]
        members[a] = members[a] + members[b]
        class_speed[a] = max(class_speed[a], class_speed[b])
        active[b] = False
        weight[b, :] = -np.inf
        weight[:, b] = -np.inf
        overlap[b, :] = 0
        overlap[:, b] = 0
        refresh(a)
        merges += 1

    result = MergeResult({}, {}, {}, merges=merges)
    for label, k in enumerate(np.flatnonzero(active)):
        k = int(k)
        result.classes[label] = reps[k]
        result.members[label] = list(members[k])
        for s in members[k]:
            result.assignments[s] = label
        _, mean_perf = _best_in(reps[k], members[k], perf)
        result.scores[label] = {c: mean_perf(c) for c in reps[k]}
    result.target_met = result.class_count <= target_nr
    return result


def raw_labels(surfaces, metas):
    """Unmerged labelling: one class per distinct oracle configuration."""
    best = {m.sample_id: oracle_best(surfaces[m.sample_id])[0] for m in metas}
    configs = sorted(set(best.values()))
    index = {c: i for i, c in enumerate(configs)}
    result = MergeResult({}, {}, {})
    for c, i in index.items():
        result.classes[i] = frozenset([c])
        result.members[i] = []
        result.scores[i] = {c: 1.0}
    for m in metas:
        label = index[best[m.sample_id]]
        result.assignments[m.sample_id] = label
        result.members[label].append(m.sample_id)
    return result


def label_to_config(label, result):
    """Representative config of a class: best mean normalised performance over
    its members, ties by lexicographic order."""
    if label not in result.classes:
        raise KeyError(f"unknown label {label}")
    scores = result.scores.get(label, {})
    return min(result.classes[label], key=lambda c: (-scores.get(c, 0.0), c))


def labels_csv(result, metas):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "program_id", "dataset_id", "label_id", "rep_partitions", "rep_tasks"])
    for m in metas:
        label = result.assignments[m.sample_id]
        c = label_to_config(label, result)
        writer.writerow([m.sample_id, m.program_id, m.dataset_id, label, c.partitions, c.tasks])
    return buf.getvalue()
