"""Feature derivation, correlation pruning, scaling and importance ranking.

Raw counters are synthesised from a :class:`~streamtune.simulator.WorkloadSpec`
and its non-streamed profile run; the mapping is fixed by
``data/feature_manifest.json``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import InsufficientDataError
from .simulator import BASELINE, stage_durations

CLOCK_HZ = 1.1e9
PRUNE_THRESHOLD = 0.7
PCA_VARIANCE = 0.95
VARIMAX_TOL = 1e-6
VARIMAX_SWEEPS = 100

SELECTED_FEATURES = (
    "loop_nest", "loop_count", "xfer_mem_calls", "dts", "redundant_transfer_size",
    "max_blocks", "min_task_unit", "instruction_count", "branch_miss_rate", "l1_dcr",
)


@lru_cache(maxsize=None)
def load_manifest():
    text = resources.files("streamtune").joinpath("data/feature_manifest.json").read_text()
    return json.loads(text)


def raw_feature_names():
    return [entry["name"] for entry in load_manifest()["raw"]]


def candidate_order():
    return list(load_manifest()["candidate_order"])


def _u(program_id, key, seed):
    digest = hashlib.sha256(f"{seed}:{program_id}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def extract_features(w, profile_run, seed=0):
    """Synthesise the 38 raw counters for one (program, dataset) sample.

    ``profile_run`` is the (1,1) record. Per-program perturbations are drawn
    from a hash of ``(seed, program_id)``, so two datasets of one program
    differ only in the size-dependent counters.
    """
    if profile_run.config != BASELINE:
        raise ValueError("profile_run must be the non-streamed (1,1) record")

    def u(key):
        return _u(w.program_id, key, seed)

    n = float(w.elements)
    b_io = w.bytes_per_element_in + w.bytes_per_element_out
    f = {}
    f["loop_nest"] = float(1 + math.floor(3 * u("loop_nest")))
    f["loop_count"] = n / 2.0 ** math.floor(7 * u("loop_count"))
    f["xfer_mem_calls"] = float(math.ceil(w.bytes_per_element_in / 4)
                                + math.ceil(w.bytes_per_element_out / 4))
    f["dts"] = n * b_io
    f["redundant_transfer_size"] = (2.0 * w.transfer_beta / w.transfer_alpha
                                    if w.transfer_alpha > 0 else 0.0)
    f["max_blocks"] = float(w.outer_iterations)
    f["min_task_unit"] = float(math.ceil(w.compute_gamma * CLOCK_HZ))
    cycles = n * w.compute_eta * CLOCK_HZ
    f["instruction_count"] = cycles * (0.8 + 0.8 * u("ipc"))
    f["e_stage_cycles"] = cycles * (1 + 0.05 * u("e_stage_cycles"))

    branches = f["instruction_count"] * (0.08 + 0.1 * u("branch_share"))
    miss_rate = 0.01 + 0.05 * u("branch_miss") + 0.01 * (w.outer_iterations > 1)
    f["branch_hits"] = branches * (1 - miss_rate)
    f["branch_misses"] = branches * miss_rate
    f["l1_accesses"] = f["instruction_count"] * (0.3 + 0.2 * u("l1_share"))
    per_cycle = b_io / (w.compute_eta * CLOCK_HZ) if w.compute_eta > 0 else 1e6
    l1_rate = min(0.9, 0.01 + 0.08 * u("l1_miss") + 0.05 * per_cycle / (1 + per_cycle))
    f["l1_misses"] = f["l1_accesses"] * l1_rate

    for name, base, spread in (
        ("retired_uops", 1.15, 0.05), ("fp_operations", 0.4, 0.05),
        ("vector_instructions", 0.25, 0.03), ("mem_load_ops", 0.28, 0.03),
        ("mem_store_ops", 0.12, 0.02), ("l2_accesses", 0.05, 0.01),
        ("branch_instructions", 0.12, 0.01),
    ):
        f[name] = f["instruction_count"] * (base + spread * u(name))

    f["bytes_to_device"] = n * w.bytes_per_element_in
    f["dma_bytes_total"] = f["dts"] * (1 + 0.02 * u("dma_bytes_total"))
    f["dma_descriptors"] = float(math.ceil(f["dts"] / 4096))
    f["page_faults"] = math.ceil(f["dts"] / 2**21) * (1 + 0.1 * u("page_faults"))
    f["tlb_misses"] = f["dts"] / 4096 * (0.5 + 0.1 * u("tlb_misses"))
    t_in, t_comp, t_out = stage_durations(w, BASELINE)
    comm = float(t_in.sum() + t_out.sum())
    busy = comm + float(t_comp.sum())
    f["host_wait_cycles"] = profile_run.runtime * CLOCK_HZ * (comm / busy if busy > 0 else 0.0)

    f["buffer_allocations"] = f["xfer_mem_calls"]
    f["sync_calls"] = f["xfer_mem_calls"] + 1
    f["kernel_launches"] = f["max_blocks"] * (1 + 0.01 * u("kernel_launches"))
    f["barrier_count"] = 2 * f["max_blocks"]
    f["loop_trip_total"] = f["loop_count"] * (1 + 0.02 * u("loop_trip_total"))
    f["induction_variables"] = f["loop_nest"] + 1
    f["task_unit_iterations"] = f["min_task_unit"] * (1 + 0.02 * u("task_unit_iterations"))
    f["halo_exchanges"] = f["redundant_transfer_size"] / 1024 * (1 + 0.02 * u("halo_exchanges"))
    f["vector_width"] = 16.0
    f["device_count"] = 1.0
    f["cache_line_bytes"] = 64.0
    f["threads_per_core"] = 4.0

    return {name: float(f[name]) for name in raw_feature_names()}


def _rate(num, den):
    return num / den if den > 0 else 0.0


def combine_features(raw, compress=True):
    """Replace raw hit/miss counters by rates; returns candidates in manifest order.

    Counters span several orders of magnitude across programs, so with
    ``compress`` they are mapped through ``log1p``. Rates are left as is.
    """
    manifest = load_manifest()
    values = {k: (math.log1p(v) if compress else v) for k, v in raw.items()}
    consumed = set()
    for spec in manifest["combined"]:
        num = sum(raw[k] for k in spec["numerator"])
        den = sum(raw[k] for k in spec["denominator"])
        values[spec["name"]] = _rate(num, den)
        consumed.update(spec["numerator"], spec["denominator"])
    return {name: float(values[name]) for name in manifest["candidate_order"]
            if name not in consumed}


@dataclass
class CorrelationMatrix:
    names: list
    r: np.ndarray
    constant: np.ndarray  # bool per feature


def pearson_matrix(samples, names=None):
    """Pearson coefficients between candidate features.

    ``samples`` is a sequence of candidate dicts (or a 2-D array with
    ``names``). Zero-variance features are flagged constant and get r = 0
    against everything, including themselves.
    """
    if names is None:
        names = list(samples[0])
        X = np.array([[s[n] for n in names] for s in samples], dtype=float)
    else:
        X = np.asarray(samples, dtype=float)
    if X.shape[0] < 2:
        raise InsufficientDataError("pearson_matrix needs at least 2 samples")
    centred = X - X.mean(axis=0)
    norms = np.sqrt((centred**2).sum(axis=0))
    constant = norms <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    safe = np.where(constant, 1.0, norms)
    Z = centred / safe
    r = np.clip(Z.T @ Z, -1.0, 1.0)
    r[constant, :] = 0.0
    r[:, constant] = 0.0
    idx = np.flatnonzero(~constant)
    r[idx, idx] = 1.0
    return CorrelationMatrix(list(names), r, constant)


def prune_correlated(m, threshold=PRUNE_THRESHOLD):
    """Greedy scan in manifest order; keep a feature iff |r| <= threshold
    against every feature kept so far. Constants are dropped up front."""
    kept = []
    for i, name in enumerate(m.names):
        if m.constant[i]:
            continue
        if all(abs(m.r[i, j]) <= threshold for j in kept):
            kept.append(i)
    return [m.names[i] for i in kept]


def select_features(candidate_rows, threshold=PRUNE_THRESHOLD):
    """Correlation pruning over a list of candidate dicts."""
    return prune_correlated(pearson_matrix(candidate_rows), threshold)


@dataclass
class ScalingParams:
    names: list
    mins: np.ndarray
    maxs: np.ndarray

    def to_dict(self):
        return {"names": list(self.names), "mins": [float(v) for v in self.mins],
                "maxs": [float(v) for v in self.maxs]}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["names"]), np.array(d["mins"], dtype=float),
                   np.array(d["maxs"], dtype=float))


def fit_scaler(vectors, names=None):
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    if X.shape[0] < 1 or X.size == 0:
        raise InsufficientDataError("fit_scaler needs at least one vector")
    if names is None:
        names = [f"f{i}" for i in range(X.shape[1])]
    return ScalingParams(list(names), X.min(axis=0), X.max(axis=0))


def apply_scaler(params, vector):
    """Min-max scale into [0, 1]; out-of-range values clamp, constant features map to 0."""
    x = np.asarray(vector, dtype=float)
    span = params.maxs - params.mins
    flat = span <= 0
    scaled = (x - params.mins) / np.where(flat, 1.0, span)
    scaled = np.where(flat, 0.0, scaled)
    return np.clip(scaled, 0.0, 1.0)


def vectorise(candidates, names):
    """Pick ``names`` out of a candidate dict, in order."""
    return np.array([candidates[n] for n in names], dtype=float)


def varimax_criterion(L):
    """Sum over columns of the variance of squared loadings."""
    sq = L**2
    return float(np.sum(np.mean(sq**2, axis=0) - np.mean(sq, axis=0) ** 2))


def varimax(L, normalize=True, tol=VARIMAX_TOL, max_sweeps=VARIMAX_SWEEPS):
    """Kaiser's pairwise varimax.

    Each planar rotation maximises the criterion for its column pair, so the
    criterion never decreases. Returns ``(rotated, rotation, history)`` where
    ``history`` holds the criterion after every sweep (index 0: start).
    """
    L = np.array(L, dtype=float)
    p, k = L.shape
    R = np.eye(k)
    if k < 2:
        return L.copy(), R, [varimax_criterion(L)]
    h = np.sqrt((L**2).sum(axis=1))
    if normalize:
        safe = np.where(h > 0, h, 1.0)
        B = L / safe[:, None]
    else:
        B = L.copy()
    history = [varimax_criterion(B)]
    for _ in range(max_sweeps):
        for a in range(k - 1):
            for b in range(a + 1, k):
                x, y = B[:, a], B[:, b]
                u = x**2 - y**2
                v = 2 * x * y
                A, Bs = u.sum(), v.sum()
                C = (u**2 - v**2).sum()
                D = 2 * (u * v).sum()
                num = D - 2 * A * Bs / p
                den = C - (A**2 - Bs**2) / p
                phi = math.atan2(num, den) / 4
                if abs(phi) < 1e-15:
                    continue
                c, s = math.cos(phi), math.sin(phi)
                B[:, a], B[:, b] = x * c + y * s, -x * s + y * c
                Ra, Rb = R[:, a].copy(), R[:, b].copy()
                R[:, a], R[:, b] = Ra * c + Rb * s, -Ra * s + Rb * c
        history.append(varimax_criterion(B))
        if history[-1] - history[-2] <= tol * max(1.0, abs(history[-2])):
            break
    rotated = B * h[:, None] if normalize else B
    return rotated, R, history


@dataclass
class ImportanceResult:
    ranking: list  # (feature, importance) sorted by importance, descending
    loadings: np.ndarray  # rotated, features x components
    rotation: np.ndarray
    history: list
    n_components: int
    explained: float
    rotated: bool


def feature_importance(X, names):
    """PCA (95% variance) followed by varimax; importance is the per-feature
    sum of squared rotated loadings."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if d < 2 or n < 3:
        raise InsufficientDataError("feature_importance needs >= 2 features and >= 3 samples")
    centred = X - X.mean(axis=0)
    _, s, Vt = np.linalg.svd(centred, full_matrices=False)
    var = s**2 / (n - 1)
    total = var.sum()
    nonzero = int(np.sum(s > 1e-10 * max(1.0, s.max())))
    if total <= 0:
        ranking = sorted(((name, 0.0) for name in names), key=lambda t: names.index(t[0]))
        return ImportanceResult(ranking, np.zeros((d, 0)), np.eye(0), [], 0, 0.0, False)
    frac = np.cumsum(var) / total
    k = int(np.searchsorted(frac, PCA_VARIANCE - 1e-12) + 1)
    k = min(k, nonzero)
    loadings = Vt[:k].T * np.sqrt(var[:k])
    if nonzero < 2:
        rotated, R, history, did_rotate = loadings, np.eye(k), [], False
    else:
        rotated, R, history = varimax(loadings)
        did_rotate = True
    importance = (rotated**2).sum(axis=1)
    order = sorted(range(d), key=lambda i: (-importance[i], i))
    ranking = [(names[i], float(importance[i])) for i in order]
    return ImportanceResult(ranking, rotated, R, history, k, float(frac[k - 1]), did_rotate)
