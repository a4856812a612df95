"""Command-line entry point.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
Diagnostics go to stderr; results go to files under ``--out`` (``predict``
also prints its answer).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import harness
from .errors import StreamTuneError
from .features import combine_features, extract_features
from .labeling import labels_csv, merge_labels, raw_labels, well_performing_set
from .learner import LEARNERS, Hyperparams, load_model, save_model
from .simulator import (BASELINE, WorkloadSpec, anneal_search, default_grid, exhaustive_profile,
                        load_workload, parse_grid, profile_config)

EVAL_MODES = ("loocv", "cross-suite", "compare", "ablation", "correlation")


class UsageError(Exception):
    pass


def _common(p, *, corpus=False, model=False, learner=False, labels=False, workload=False):
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--grid", help="grid as 'P1,P2,..xT1,T2,..' (default: 11x9 desk grid)")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--config", help="JSON file supplying any flag; explicit flags win")
    if corpus:
        p.add_argument("--corpus", help="built corpus directory/corpus.json, or a corpus spec "
                                        "(default: bundled spec)")
    if model:
        p.add_argument("--model", help="model JSON file")
    if learner:
        p.add_argument("--learner", choices=sorted(LEARNERS), help="classifier (default svm-quad)")
        p.add_argument("--tune", action="store_true", default=None,
                       help="grid-search hyperparameters inside each fold")
    if labels:
        p.add_argument("--top-pct", type=float, help="well-performing share of the grid, in percent")
        p.add_argument("--target-nr", type=int, help="maximum number of merged classes")
        p.add_argument("--w2", type=float, help="merge weight for a shared program")
        p.add_argument("--w3", type=float, help="merge weight for a shared dataset")
    if workload:
        p.add_argument("--workload", help="workload spec JSON")
        p.add_argument("--sample", help="corpus sample id 'program/dataset'")


def build_parser():
    ap = argparse.ArgumentParser(prog="streamtune", description="Stream configuration autotuner.")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("gen", help="build a corpus (surfaces and features)")
    _common(p, corpus=True)

    p = sub.add_parser("sweep", help="profile one workload over the grid; write heatmap CSV")
    _common(p, corpus=True, workload=True)

    p = sub.add_parser("label", help="well-performing sets and merged labels")
    _common(p, corpus=True, labels=True)
    p.add_argument("--raw", action="store_true", default=None, help="skip merging")

    p = sub.add_parser("train", help="train a model on the train suite")
    _common(p, corpus=True, model=True, learner=True, labels=True)

    p = sub.add_parser("predict", help="predict a configuration")
    _common(p, corpus=True, model=True, workload=True)
    p.add_argument("--features", help="JSON file of candidate features")

    p = sub.add_parser("eval", help="evaluation reports")
    p.add_argument("mode", choices=EVAL_MODES)
    _common(p, corpus=True, learner=True, labels=True)
    p.add_argument("--budget", type=int, help=f"annealing budget (default {harness.ANNEAL_BUDGET})")

    p = sub.add_parser("anneal", help="simulated-annealing search on one workload")
    _common(p, corpus=True, workload=True)
    p.add_argument("--budget", type=int, help=f"iteration budget (default {harness.ANNEAL_BUDGET})")
    return ap


def _merge_config(args):
    """Overlay ``--config`` JSON under explicitly given flags."""
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a JSON object")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise UsageError(f"{path}: unknown option {key!r} for '{args.command}'")
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _opts(args):
    kw = {}
    if getattr(args, "learner", None):
        kw["learner"] = args.learner
    if getattr(args, "tune", None):
        kw["tune"] = True
    for name in ("top_pct", "target_nr", "w2", "w3"):
        if getattr(args, name, None) is not None:
            kw[name] = getattr(args, name)
    opts = harness.EvalOptions(**kw)
    Hyperparams.for_learner(opts.learner)  # validates the name
    return opts


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid(args):
    return parse_grid(args.grid) if args.grid else None


def _check_inputs(args):
    for name in ("corpus", "model", "workload", "features"):
        if name == "model" and args.command == "train":
            continue  # an output there
        value = getattr(args, name, None)
        if value and not Path(value).exists():
            raise FileNotFoundError(f"{name} not found: {value}")


def _load_corpus(args):
    path = getattr(args, "corpus", None)
    if path:
        p = Path(path)
        target = p / "corpus.json" if p.is_dir() else p
        doc = json.loads(target.read_text())
        if isinstance(doc, dict) and "samples" in doc:
            return corpus_mod.load_corpus(target)
        return corpus_mod.build_corpus(target, args.seed, _grid(args))
    return corpus_mod.build_corpus(None, args.seed, _grid(args))


def _workload(args):
    if getattr(args, "workload", None):
        return load_workload(args.workload)
    path = getattr(args, "corpus", None) if getattr(args, "sample", None) else None
    if path:
        p = Path(path)
        target = p / "corpus.json" if p.is_dir() else p
        doc = json.loads(target.read_text())
        if isinstance(doc, dict) and "samples" in doc:
            workloads = [WorkloadSpec.from_dict(s["workload"]) for s in doc["samples"]]
        else:
            workloads = corpus_mod.workloads_from_spec(*corpus_mod.load_spec(target))
    else:
        workloads = corpus_mod.workloads_from_spec(*corpus_mod.load_spec(corpus_mod.DEFAULT_SPEC))
    if getattr(args, "sample", None):
        for w in workloads:
            if w.sample_id == args.sample:
                return w
        raise StreamTuneError(f"no sample {args.sample!r} in corpus spec")
    return next(w for w in workloads if w.program_id == "overlap-balanced")


def cmd_gen(args):
    c = _load_corpus(args)
    path = corpus_mod.save_corpus(c, _out_dir(args))
    print(f"wrote {path} digest={c.digest()}", file=sys.stderr)


def cmd_sweep(args):
    w = _workload(args)
    grid = _grid(args) or default_grid(w.total_cores)
    s = exhaustive_profile(w, grid, args.seed)
    out = _out_dir(args)
    (out / "heatmap.csv").write_text(s.heatmap_csv())
    (out / "surface.csv").write_text(s.to_csv())
    print(f"wrote {out / 'heatmap.csv'} ({len(grid)} rows)", file=sys.stderr)


def cmd_label(args):
    c = _load_corpus(args)
    opts = _opts(args)
    metas = c.metas("train")
    surfaces = {m.sample_id: c.surfaces[m.sample_id] for m in metas}
    if args.raw:
        result = raw_labels(surfaces, metas)
    else:
        sets = [well_performing_set(surfaces[m.sample_id], opts.top_pct) for m in metas]
        result = merge_labels(sets, metas, opts.target_nr, surfaces, opts.w2, opts.w3)
    out = _out_dir(args)
    (out / "labels.csv").write_text(labels_csv(result, metas))
    summary = {"classes": result.class_count, "merges": result.merges, "target_met": result.target_met}
    (out / "labels.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"{result.class_count} classes after {result.merges} merges", file=sys.stderr)


def cmd_train(args):
    c = _load_corpus(args)
    ids = [w.sample_id for w in c.samples_of(c.program_ids("train"))]
    model, info = harness.fit_model(c, ids, _opts(args), args.seed)
    path = Path(args.model) if args.model else _out_dir(args) / "model.json"
    save_model(model, path)
    print(f"wrote {path} ({info['class_count']} classes, features: {', '.join(info['features'])})",
          file=sys.stderr)


def cmd_predict(args):
    if not args.model:
        raise UsageError("predict needs --model")
    model = load_model(args.model)
    if args.features:
        candidates = json.loads(Path(args.features).read_text())
    elif args.workload or args.sample:
        w = _workload(args)
        run = profile_config(w, BASELINE, args.seed)
        candidates = combine_features(extract_features(w, run, seed=args.seed))
    else:
        raise UsageError("predict needs --features, --workload or --sample")
    config = harness.predict_config(model, candidates)
    print(f"partitions={config.partitions} tasks={config.tasks}")


def cmd_eval(args):
    c = _load_corpus(args)
    opts = _opts(args)
    out = _out_dir(args)
    budget = args.budget if args.budget is not None else harness.ANNEAL_BUDGET
    if args.mode == "cross-suite":
        report = harness.cross_suite_evaluate(c, opts, args.seed)
    elif args.mode == "ablation":
        ab = harness.merging_ablation(c, opts, args.seed)
        (out / "merged.csv").write_text(ab.merged.to_csv())
        (out / "unmerged.csv").write_text(ab.unmerged.to_csv())
        summary = {"merged": ab.merged.summary(), "unmerged": ab.unmerged.summary(),
                   "delta": repr(ab.delta)}
        (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        print(f"merged vs unmerged geomean delta {ab.delta:+.4f}", file=sys.stderr)
        return
    else:
        report = harness.loocv_evaluate(c, opts, args.seed)
        if args.mode == "compare":
            report = harness.compare_schemes(c, report.predictions(), args.seed, budget)
    corr = harness.ratio_speedup_correlation(c, report)
    report.correlation = corr.r
    if args.mode == "correlation":
        (out / "ratio_speedup.csv").write_text(corr.scatter_csv())
    (out / "report.csv").write_text(report.to_csv())
    (out / "summary.json").write_text(report.summary_json())
    (out / "speedups.csv").write_text(report.speedup_distribution_csv())
    for scheme, g in report.geomeans().items():
        print(f"{scheme}: geomean speedup {g:.4f}", file=sys.stderr)


def cmd_anneal(args):
    w = _workload(args)
    grid = _grid(args) or default_grid(w.total_cores)
    budget = args.budget if args.budget is not None else harness.ANNEAL_BUDGET
    best, speedup = anneal_search(w, grid, budget, args.seed)
    out = _out_dir(args)
    doc = {"sample": w.sample_id, "partitions": best.partitions, "tasks": best.tasks,
           "speedup": repr(speedup), "budget": budget}
    (out / "anneal.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"partitions={best.partitions} tasks={best.tasks} speedup={speedup:.4f}", file=sys.stderr)


COMMANDS = {
    "gen": cmd_gen, "sweep": cmd_sweep, "label": cmd_label, "train": cmd_train,
    "predict": cmd_predict, "eval": cmd_eval, "anneal": cmd_anneal,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _merge_config(args)
        if args.seed is None:
            raise UsageError("--seed is required")
        _check_inputs(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"streamtune: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"streamtune: {exc}", file=sys.stderr)
        return 1
    except (StreamTuneError, ValueError, KeyError, OSError) as exc:
        print(f"streamtune: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
