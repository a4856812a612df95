"""Synthetic benchmark corpora.

A corpus spec is a JSON document listing programs. Each program carries a
cost archetype and a list of datasets (element counts). Building a corpus
expands every (program, dataset) pair into a :class:`WorkloadSpec`, profiles
it exhaustively over the grid and synthesises its counter features.

Spec layout::

    {
      "version": "1",
      "machine": {"total_cores": 224, "transfer_alpha": 1.6e-10, ...},
      "programs": [
        {"program_id": "stream-copy", "suite": "train", "family": "stream-copy",
         "bytes_in": 8, "bytes_out": 8, "compute_ratio": 0.1,
         "compute_gamma": 1e-4, "transfer_beta": 2e-5, "outer_iterations": 1,
         "datasets": [{"dataset_id": "d1", "elements": 1048576}, ...]},
        ...
      ]
    }

``compute_ratio`` is the compute-to-transfer time ratio of the element
dependent terms at the (1,1) configuration; the per-element compute cost
follows from it.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusParseError
from .features import combine_features, extract_features
from .labeling import SampleMeta
from .simulator import (BASELINE, PerfSurface, WorkloadSpec, default_grid, derive_seed,
                        exhaustive_profile, stage_durations)

SPEC_VERSION = "1"
SUITES = ("train", "test")
DEFAULT_SPEC = Path(__file__).with_name("data") / "default_corpus.json"

MACHINE_FIELDS = {
    "total_cores": int,
    "transfer_alpha": float,
    "thread_overhead": float,
    "partition_overhead": float,
    "noise_sigma": float,
}
PROGRAM_FIELDS = {
    "program_id": str,
    "suite": str,
    "family": str,
    "bytes_in": float,
    "bytes_out": float,
    "compute_ratio": float,
    "compute_gamma": float,
    "transfer_beta": float,
    "outer_iterations": int,
    "datasets": list,
}


@dataclass(frozen=True)
class ProgramInfo:
    program_id: str
    suite: str
    family: str


@dataclass
class Corpus:
    programs: dict  # program_id -> ProgramInfo
    workloads: list  # WorkloadSpec, in spec order
    surfaces: dict = field(default_factory=dict)  # sample_id -> PerfSurface
    features: dict = field(default_factory=dict)  # sample_id -> candidate dict
    seed: int = 0

    def metas(self, suite=None):
        return [SampleMeta(w.sample_id, w.program_id, w.dataset_id) for w in self.workloads
                if suite is None or self.programs[w.program_id].suite == suite]

    def program_ids(self, suite=None):
        seen = []
        for w in self.workloads:
            if w.program_id not in seen and (suite is None or self.programs[w.program_id].suite == suite):
                seen.append(w.program_id)
        return seen

    def samples_of(self, program_ids):
        wanted = set(program_ids)
        return [w for w in self.workloads if w.program_id in wanted]

    def family_of(self, program_id):
        return self.programs[program_id].family

    def grid(self):
        return self.surfaces[self.workloads[0].sample_id].grid

    def digest(self):
        """SHA-256 over workloads, surfaces and features in canonical form."""
        h = hashlib.sha256()
        for w in self.workloads:
            h.update(json.dumps(w.to_dict(), sort_keys=True).encode())
            h.update(self.surfaces[w.sample_id].to_csv().encode())
            feats = self.features[w.sample_id]
            h.update(json.dumps({k: repr(v) for k, v in feats.items()}, sort_keys=True).encode())
        return h.hexdigest()


# -- parsing ---------------------------------------------------------------

def _line_of(text, needle, start=0):
    pos = text.find(needle, start)
    return text.count("\n", 0, pos) + 1 if pos >= 0 else None


def _typed(value, kind, where):
    if kind is str:
        if not isinstance(value, str) or not value:
            raise CorpusParseError(f"{where}: expected a non-empty string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise CorpusParseError(f"{where}: expected a list, got {type(value).__name__}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CorpusParseError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if not isinstance(value, int):
            raise CorpusParseError(f"{where}: expected an integer, got {value!r}")
        return value
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise CorpusParseError(f"{where}: expected a finite non-negative number, got {value!r}")
    return value


def _fields(obj, spec, where):
    if not isinstance(obj, dict):
        raise CorpusParseError(f"{where}: expected an object")
    missing = [k for k in spec if k not in obj]
    extra = sorted(set(obj) - set(spec))
    if missing:
        raise CorpusParseError(f"{where}: missing field(s) {', '.join(missing)}")
    if extra:
        raise CorpusParseError(f"{where}: unknown field(s) {', '.join(extra)}")
    return {k: _typed(obj[k], kind, f"{where}.{k}") for k, kind in spec.items()}


def parse_spec(text, source="<spec>"):
    """Validate a corpus spec and return ``(machine, programs)`` plain dicts.

    Errors name the offending field path and, where it can be located, the
    source line.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CorpusParseError(f"{source}: top level must be an object")
    if str(doc.get("version")) != SPEC_VERSION:
        raise CorpusParseError(f"{source}: unsupported spec version {doc.get('version')!r}")
    machine = _fields(doc.get("machine"), MACHINE_FIELDS, f"{source}: machine")
    raw_programs = doc.get("programs")
    if not isinstance(raw_programs, list) or not raw_programs:
        raise CorpusParseError(f"{source}: programs must be a non-empty list")

    programs, seen = [], set()
    for i, raw in enumerate(raw_programs):
        where = f"{source}: programs[{i}]"
        p = _fields(raw, PROGRAM_FIELDS, where)
        line = _line_of(text, f'"{p["program_id"]}"')
        if line:
            where = f"{where} (line {line})"
        if p["suite"] not in SUITES:
            raise CorpusParseError(f"{where}.suite: expected one of {SUITES}, got {p['suite']!r}")
        if p["outer_iterations"] < 1:
            raise CorpusParseError(f"{where}.outer_iterations: must be >= 1")
        if p["bytes_in"] + p["bytes_out"] <= 0:
            raise CorpusParseError(f"{where}: bytes_in + bytes_out must be positive")
        datasets = []
        for j, d in enumerate(p["datasets"]):
            dw = f"{where}.datasets[{j}]"
            d = _fields(d, {"dataset_id": str, "elements": int}, dw)
            if d["elements"] < 1:
                raise CorpusParseError(f"{dw}.elements: must be >= 1")
            key = (p["program_id"], d["dataset_id"])
            if key in seen:
                dline = _line_of(text, f'"{d["dataset_id"]}"', text.find(f'"{p["program_id"]}"'))
                at = f" (line {dline})" if dline else ""
                raise CorpusParseError(f"{dw}{at}: duplicate (program, dataset) {key}")
            seen.add(key)
            datasets.append(d)
        if not datasets:
            raise CorpusParseError(f"{where}.datasets: must not be empty")
        p["datasets"] = datasets
        programs.append(p)

    families = {}
    for p in programs:
        families.setdefault(p["family"], set()).add(p["suite"])
    for fam, suites in families.items():
        if len(suites) > 1:
            raise CorpusParseError(f"{source}: family {fam!r} spans both suites")
    return machine, programs


def load_spec(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CorpusParseError(f"{path}: {exc.strerror}") from None
    return parse_spec(text, str(path))


def workloads_from_spec(machine, programs):
    out = []
    alpha = machine["transfer_alpha"]
    cores = machine["total_cores"]
    for p in programs:
        eta = p["compute_ratio"] * cores * alpha * (p["bytes_in"] + p["bytes_out"])
        for d in p["datasets"]:
            out.append(WorkloadSpec(
                program_id=p["program_id"], dataset_id=d["dataset_id"], elements=d["elements"],
                bytes_per_element_in=p["bytes_in"], bytes_per_element_out=p["bytes_out"],
                transfer_alpha=alpha, transfer_beta=p["transfer_beta"], compute_eta=eta,
                compute_gamma=p["compute_gamma"], thread_overhead=machine["thread_overhead"],
                partition_overhead=machine["partition_overhead"], total_cores=cores,
                outer_iterations=p["outer_iterations"], noise_sigma=machine["noise_sigma"]))
    return out


def build_corpus(spec_path=None, seed=0, grid=None, text=None):
    """Expand, profile and featurise every sample of a spec.

    Sample ``k`` of program ``i`` is profiled with ``derive_seed(seed, i, k)``.
    """
    if text is not None:
        machine, programs = parse_spec(text)
    else:
        machine, programs = load_spec(spec_path or DEFAULT_SPEC)
    grid = grid or default_grid(machine["total_cores"])
    infos = {p["program_id"]: ProgramInfo(p["program_id"], p["suite"], p["family"]) for p in programs}
    workloads = workloads_from_spec(machine, programs)
    corpus = Corpus(infos, workloads, seed=seed)
    index = {pid: i for i, pid in enumerate(infos)}
    counter = {}
    for w in workloads:
        i = index[w.program_id]
        k = counter.get(i, 0)
        counter[i] = k + 1
        surface = exhaustive_profile(w, grid, derive_seed(seed, i, k))
        corpus.surfaces[w.sample_id] = surface
        raw = extract_features(w, surface.records[BASELINE], seed=seed)
        corpus.features[w.sample_id] = combine_features(raw)
    return corpus


def comm_compute_ratio(w):
    """Compute time over transfer time at the (1,1) configuration."""
    t_in, t_comp, t_out = stage_durations(w, BASELINE)
    return float(t_comp.sum() / (t_in.sum() + t_out.sum()))


# -- persistence -----------------------------------------------------------

def save_corpus(corpus, out_dir):
    """Write ``corpus.json`` plus one surface CSV per sample."""
    out = Path(out_dir)
    (out / "surfaces").mkdir(parents=True, exist_ok=True)
    doc = {
        "version": SPEC_VERSION,
        "seed": corpus.seed,
        "digest": corpus.digest(),
        "programs": [vars(p) for p in corpus.programs.values()],
        "samples": [],
    }
    for w in corpus.workloads:
        fname = f"{w.program_id}__{w.dataset_id}.csv"
        (out / "surfaces" / fname).write_text(corpus.surfaces[w.sample_id].to_csv())
        doc["samples"].append({
            "workload": w.to_dict(),
            "surface": f"surfaces/{fname}",
            "features": {k: repr(v) for k, v in corpus.features[w.sample_id].items()},
        })
    (out / "corpus.json").write_text(json.dumps(doc, indent=1) + "\n")
    return out / "corpus.json"


def load_corpus(path):
    path = Path(path)
    if path.is_dir():
        path = path / "corpus.json"
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise CorpusParseError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    infos = {p["program_id"]: ProgramInfo(**p) for p in doc["programs"]}
    corpus = Corpus(infos, [], seed=doc.get("seed", 0))
    for i, s in enumerate(doc["samples"]):
        w = WorkloadSpec.from_dict(s["workload"], where=f"{path}: samples[{i}].workload")
        corpus.workloads.append(w)
        corpus.surfaces[w.sample_id] = PerfSurface.from_csv(w, (path.parent / s["surface"]).read_text())
        corpus.features[w.sample_id] = {k: float(v) for k, v in s["features"].items()}
    if doc.get("digest") and corpus.digest() != doc["digest"]:
        raise CorpusParseError(f"{path}: digest mismatch; corpus files were modified")
    return corpus


# -- default spec ----------------------------------------------------------

MACHINE = {
    "total_cores": 224,
    "transfer_alpha": 1.0 / 6e9,
    "thread_overhead": 1e-8,
    "partition_overhead": 2e-5,
    "noise_sigma": 0.02,
}

# (program_id, suite, family, archetype)
DEFAULT_PROGRAMS = (
    ("stream-copy", "train", "stream-copy", "comm"),
    ("vector-add", "train", "vector-add", "comm"),
    ("prefix-scan", "train", "prefix-scan", "comm"),
    ("transpose-tiled", "train", "transpose-tiled", "balanced"),
    ("histogram", "train", "histogram", "balanced"),
    ("dct-blocks", "train", "dct-blocks", "balanced"),
    ("overlap-balanced", "train", "overlap-balanced", "balanced"),
    ("conv-sep-r1", "train", "conv-sep", "compute"),
    ("conv-sep-r8", "train", "conv-sep", "compute"),
    ("fft-2d-a", "train", "fft-2d", "compute"),
    ("fft-2d-b", "train", "fft-2d", "compute"),
    ("option-lattice", "train", "option-lattice", "balanced"),
    ("montecarlo-paths", "train", "montecarlo-paths", "compute"),
    ("nbody-tiles", "train", "nbody-tiles", "compute"),
    ("matmul-blocked", "train", "matmul-blocked", "compute"),
    ("reduction-tree", "train", "reduction-tree", "comm"),
    ("bitonic-sort", "train", "bitonic-sort", "balanced"),
    ("radix-sort", "train", "radix-sort", "comm"),
    ("black-scholes", "train", "black-scholes", "compute"),
    ("dwt-haar", "train", "dwt-haar", "comm"),
    ("box-filter", "train", "box-filter", "balanced"),
    ("sobel-edge", "train", "sobel-edge", "balanced"),
    ("mersenne-rng", "train", "mersenne-rng", "compute"),
    ("quasirandom-gen", "train", "quasirandom-gen", "balanced"),
    ("particle-grid", "train", "particle-grid", "balanced"),
    ("eigen-bisect", "train", "eigen-bisect", "compute"),
    ("walsh-transform", "train", "walsh-transform", "comm"),
    ("binomial-tree", "train", "binomial-tree", "compute"),
    ("hmm-viterbi", "train", "hmm-viterbi", "balanced"),
    ("scan-segmented", "train", "scan-segmented", "comm"),
    ("spmv-csr", "test", "spmv-csr", "comm"),
    ("bfs-frontier", "test", "bfs-frontier", "balanced"),
    ("stencil-3d", "test", "stencil-3d", "balanced"),
    ("sgemm-tiles", "test", "sgemm-tiles", "compute"),
    ("mri-gridding", "test", "mri-gridding", "balanced"),
    ("lbm-d3q19", "test", "lbm-d3q19", "compute"),
    ("cutcp-lattice", "test", "cutcp-lattice", "compute"),
    ("sad-blocks", "test", "sad-blocks", "comm"),
    ("tpacf-bins", "test", "tpacf-bins", "balanced"),
    ("mri-q", "test", "mri-q", "compute"),
)

ARCHETYPES = {
    "comm": (0.05, 0.3),
    "balanced": (0.5, 2.0),
    "compute": (3.0, 10.0),
}
NESTED_SHARE = 0.4
OUTER_RANGE = (200, 50000)
BETA_RANGE = (1e-5, 5e-5)
GAMMA_RANGE = (2e-5, 1e-4)
LOG2_N_RANGE = (17, 21)
DATASET_SPREAD = 2.0


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _dataset_sizes(n0, count, spread=DATASET_SPREAD):
    """``count`` sizes from ``n0`` to ``spread * n0``, geometric, 256-element aligned."""
    out = []
    for k in range(count):
        n = int(round(n0 * spread ** (k / max(1, count - 1)) / 256)) * 256
        out.append(max(256, n))
    return out


def default_spec(seed=45, datasets=8):
    """Generate the default corpus spec deterministically."""
    rng = np.random.default_rng(seed)
    programs = []
    for pid, suite, family, kind in DEFAULT_PROGRAMS:
        ratio = _log_uniform(rng, *ARCHETYPES[kind])
        nested = rng.random() < NESTED_SHARE
        outer = int(round(_log_uniform(rng, *OUTER_RANGE))) if nested else 1
        b_in = float(rng.choice([4, 8, 12, 16]))
        b_out = float(rng.choice([4, 8, 16]))
        n0 = int(2 ** rng.uniform(*LOG2_N_RANGE))
        programs.append({
            "program_id": pid, "suite": suite, "family": family,
            "bytes_in": b_in, "bytes_out": b_out,
            "compute_ratio": round(ratio, 6),
            "compute_gamma": round(_log_uniform(rng, *GAMMA_RANGE), 9),
            "transfer_beta": round(_log_uniform(rng, *BETA_RANGE), 9),
            "outer_iterations": outer,
            "datasets": [{"dataset_id": f"n{n}", "elements": n}
                         for n in _dataset_sizes(n0, datasets)],
        })
    return {"version": SPEC_VERSION, "machine": dict(MACHINE), "programs": programs}


def write_default_spec(path=DEFAULT_SPEC, **kwargs):
    Path(path).write_text(json.dumps(default_spec(**kwargs), indent=1) + "\n")
