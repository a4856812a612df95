"""Discrete-event model of streamed offload execution.

A workload of ``elements`` data-parallel items is cut into ``tasks`` chunks.
Every chunk goes through transfer-in, compute and transfer-out. Transfers
share a single host-device channel, compute runs on ``partitions`` disjoint
core groups. The resulting makespan stands in for a measured runtime.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import _backend
from .errors import CorpusParseError, InvalidConfigError, InvalidGridError

DEFAULT_PARTITIONS = (1, 2, 4, 7, 8, 14, 16, 28, 56, 112, 224)
DEFAULT_TASKS = (1, 2, 4, 8, 16, 32, 64, 128, 256)

MIN_RUNS = 3
MAX_RUNS = 100
CI_LEVEL = 0.95
CI_REL_WIDTH = 0.05
NOISE_CLIP = 3.0
# keeps (1 + eps) positive when sigma is large enough that 3 sigma exceeds 1
MIN_NOISE_FACTOR = 1e-2


@dataclass(frozen=True, order=True)
class StreamConfig:
    """A (#partitions, #tasks) pair. Ordering is lexicographic."""

    partitions: int
    tasks: int

    def __post_init__(self):
        if int(self.partitions) < 1 or int(self.tasks) < 1:
            raise InvalidConfigError(f"partitions and tasks must be >= 1, got {self!r}")

    def __str__(self):
        return f"({self.partitions},{self.tasks})"


BASELINE = StreamConfig(1, 1)


@dataclass(frozen=True)
class WorkloadSpec:
    program_id: str
    dataset_id: str
    elements: int
    bytes_per_element_in: float
    bytes_per_element_out: float
    transfer_alpha: float
    transfer_beta: float
    compute_eta: float
    compute_gamma: float
    thread_overhead: float
    partition_overhead: float
    total_cores: int = 224
    outer_iterations: int = 1
    noise_sigma: float = 0.0

    def __post_init__(self):
        for name in ("elements", "total_cores", "outer_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in (
            "bytes_per_element_in", "bytes_per_element_out", "transfer_alpha",
            "transfer_beta", "compute_eta", "compute_gamma", "thread_overhead",
            "partition_overhead", "noise_sigma",
        ):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @property
    def sample_id(self):
        return f"{self.program_id}/{self.dataset_id}"

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj, where="workload"):
        """Build from a JSON object whose keys are exactly the field names."""
        if not isinstance(obj, dict):
            raise CorpusParseError(f"{where}: expected an object, got {type(obj).__name__}")
        names = [f.name for f in dataclasses.fields(cls)]
        missing = [n for n in names if n not in obj]
        extra = sorted(set(obj) - set(names))
        if missing:
            raise CorpusParseError(f"{where}: missing field(s) {', '.join(missing)}")
        if extra:
            raise CorpusParseError(f"{where}: unknown field(s) {', '.join(extra)}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            value = obj[f.name]
            if f.type == "str":
                if not isinstance(value, str) or not value:
                    raise CorpusParseError(f"{where}.{f.name}: expected a non-empty string")
            elif f.type == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise CorpusParseError(f"{where}.{f.name}: expected an integer, got {value!r}")
            else:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise CorpusParseError(f"{where}.{f.name}: expected a number, got {value!r}")
                value = float(value)
            kwargs[f.name] = value
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise CorpusParseError(f"{where}: {exc}") from None


def load_workload(path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return WorkloadSpec.from_dict(obj, where=str(path))


def save_workload(w, path):
    Path(path).write_text(json.dumps(w.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class PerfRecord:
    config: StreamConfig
    runtime: float
    runs: int
    unconverged: bool = False


@dataclass
class PerfSurface:
    workload: WorkloadSpec
    baseline_runtime: float
    records: dict = field(default_factory=dict)

    def __post_init__(self):
        if BASELINE not in self.records:
            raise InvalidGridError("surface has no (1,1) record")
        if self.records[BASELINE].runtime != self.baseline_runtime:
            raise ValueError("baseline_runtime must equal the (1,1) record")

    @property
    def grid(self):
        return list(self.records)

    def runtime(self, config):
        return self.records[config].runtime

    def speedup(self, config):
        return self.baseline_runtime / self.records[config].runtime

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["partitions", "tasks", "runtime_s", "runs", "unconverged"])
        for c in sorted(self.records):
            r = self.records[c]
            writer.writerow([c.partitions, c.tasks, repr(r.runtime), r.runs, int(r.unconverged)])
        return buf.getvalue()

    def heatmap_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["partitions", "tasks", "speedup"])
        for c in sorted(self.records):
            writer.writerow([c.partitions, c.tasks, repr(self.speedup(c))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, workload, text):
        records = {}
        for row in csv.DictReader(io.StringIO(text)):
            c = StreamConfig(int(row["partitions"]), int(row["tasks"]))
            records[c] = PerfRecord(c, float(row["runtime_s"]), int(row["runs"]),
                                    bool(int(row["unconverged"])))
        return cls(workload, records[BASELINE].runtime, records)


def default_grid(max_cores=224):
    """The 11 x 9 desk grid, restricted to ``partitions <= max_cores``."""
    return [StreamConfig(p, t) for p in DEFAULT_PARTITIONS if p <= max_cores for t in DEFAULT_TASKS]


def parse_grid(text):
    """Parse ``"1,2,4x1,2,4,8"`` (partitions x tasks) into a product grid."""
    try:
        parts, tasks = text.lower().split("x")
        ps = [int(v) for v in parts.split(",") if v.strip()]
        ts = [int(v) for v in tasks.split(",") if v.strip()]
    except ValueError:
        raise InvalidGridError(f"cannot parse grid {text!r}; expected 'P1,P2,...xT1,T2,...'") from None
    return [StreamConfig(p, t) for p in ps for t in ts]


def snap_to_grid(config, grid):
    """Nearest grid point in (partitions, tasks) space; ties go to the smaller config."""
    return min(grid, key=lambda c: ((c.partitions - config.partitions) ** 2
                                    + (c.tasks - config.tasks) ** 2, c))


def derive_seed(seed, *keys):
    """Child seed from a master seed and integer keys (order-sensitive)."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


def _check_config(w, c):
    if c.partitions > w.total_cores:
        raise InvalidConfigError(
            f"{c}: partitions {c.partitions} exceed total_cores {w.total_cores}")
    if c.tasks > w.elements:
        raise InvalidConfigError(f"{c}: tasks {c.tasks} exceed elements {w.elements}")


def chunk_sizes(elements, tasks):
    """Equal chunks; the remainder goes to the last one."""
    base = elements // tasks
    sizes = np.full(tasks, base, dtype=np.int64)
    sizes[-1] = elements - base * (tasks - 1)
    return sizes


def cores_per_partition(w, c):
    return max(1, w.total_cores // c.partitions)


def stage_durations(w, c):
    """Per-task (transfer-in, compute, transfer-out) durations in seconds."""
    _check_config(w, c)
    chunks = chunk_sizes(w.elements, c.tasks).astype(np.float64)
    cpp = cores_per_partition(w, c)
    t_in = w.transfer_alpha * (chunks * w.bytes_per_element_in) + w.transfer_beta
    t_out = w.transfer_alpha * (chunks * w.bytes_per_element_out) + w.transfer_beta
    threading = w.thread_overhead * cpp * w.outer_iterations / c.tasks
    t_comp = w.compute_eta * chunks / cpp + w.compute_gamma + threading
    return t_in, t_comp, t_out


def deterministic_makespan(w, c):
    """Noise-free runtime of ``w`` under ``c``, partition overhead included."""
    t_in, t_comp, t_out = stage_durations(w, c)
    span = _backend.makespan(t_in, t_comp, t_out, c.partitions)
    return span + w.partition_overhead * c.partitions


def noise_factor(sigma, seed):
    if sigma == 0:
        return 1.0
    z = np.random.default_rng(seed).standard_normal()
    eps = sigma * min(max(z, -NOISE_CLIP), NOISE_CLIP)
    return max(1.0 + eps, MIN_NOISE_FACTOR)


def simulate_run(w, c, seed):
    """One noisy run; identical (w, c, seed) gives identical bits."""
    return deterministic_makespan(w, c) * noise_factor(w.noise_sigma, seed)


_T_CACHE = {}


def _t_quantile(dof):
    q = _T_CACHE.get(dof)
    if q is None:
        q = _T_CACHE[dof] = float(stats.t.ppf(0.5 + CI_LEVEL / 2, dof))
    return q


def profile_config(w, c, seed, min_runs=MIN_RUNS, max_runs=MAX_RUNS):
    """Repeat runs until the Student-t CI is narrower than 5% of the mean."""
    base = deterministic_makespan(w, c)
    samples = []
    while True:
        samples.append(base * noise_factor(w.noise_sigma, derive_seed(seed, len(samples))))
        n = len(samples)
        if n < min_runs:
            continue
        # identical samples (sigma = 0) report the makespan exactly
        mean = samples[0] if min(samples) == max(samples) else float(np.mean(samples))
        width = 2.0 * _t_quantile(n - 1) * float(np.std(samples, ddof=1)) / math.sqrt(n)
        if width < CI_REL_WIDTH * mean:
            return PerfRecord(c, mean, n, False)
        if n >= max_runs:
            return PerfRecord(c, mean, n, True)


def exhaustive_profile(w, grid, seed):
    """Profile every grid point. Per-point seeds come from (seed, partitions, tasks)."""
    if not grid:
        raise InvalidGridError("grid is empty")
    if BASELINE not in grid:
        raise InvalidGridError("grid must include the (1,1) baseline")
    records = {}
    for c in grid:
        records[c] = profile_config(w, c, derive_seed(seed, c.partitions, c.tasks))
    return PerfSurface(w, records[BASELINE].runtime, records)


def oracle_best(s):
    """Fastest configuration and its speedup over (1,1)."""
    best = min(s.records, key=lambda c: (s.records[c].runtime, c))
    return best, s.baseline_runtime / s.records[best].runtime


def _grid_axes(grid):
    return sorted({c.partitions for c in grid}), sorted({c.tasks for c in grid})


def anneal_search(w, grid, budget, seed, t0=0.1, cooling=0.95):
    """Simulated annealing over the grid with ``simulate_run`` as objective.

    Moves go one grid step along either axis; unvisited neighbours are
    proposed first. ``t0`` is the initial temperature on relative runtime
    change (``t0=0`` gives greedy descent). ``budget`` counts iterations,
    the seeded starting point included.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    pa, ta = _grid_axes(grid)
    members = set(grid)
    cache = {}

    def cost(c):
        if c not in cache:
            cache[c] = simulate_run(w, c, derive_seed(seed, c.partitions, c.tasks))
        return cache[c]

    def neighbours(c):
        i, j = pa.index(c.partitions), ta.index(c.tasks)
        out = []
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            if 0 <= i + di < len(pa) and 0 <= j + dj < len(ta):
                n = StreamConfig(pa[i + di], ta[j + dj])
                if n in members:
                    out.append(n)
        return out

    rng = np.random.default_rng(derive_seed(seed, 0xA22EA1))
    ordered = sorted(grid)
    current = ordered[int(rng.integers(len(ordered)))]
    f_cur = cost(current)
    best, f_best = current, f_cur
    temp = t0
    for _ in range(budget - 1):
        nbrs = neighbours(current)
        if not nbrs:
            break
        pool = [n for n in nbrs if n not in cache] or nbrs
        cand = pool[int(rng.integers(len(pool)))]
        f_cand = cost(cand)
        delta = (f_cand - f_cur) / f_cur
        if delta <= 0 or (temp > 0 and rng.random() < math.exp(-delta / temp)):
            current, f_cur = cand, f_cand
        if (f_cand, cand) < (f_best, best):
            best, f_best = cand, f_cand
        temp *= cooling
    baseline = cost(BASELINE) if BASELINE in members else simulate_run(
        w, BASELINE, derive_seed(seed, 1, 1))
    return best, baseline / f_best
