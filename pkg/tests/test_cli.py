import json
import time

import pytest

from streamtune import cli

from test_corpus import tiny_spec

GRID = "1,2,4x1,2,4,8"


@pytest.fixture
def spec_file(tmp_path):
    spec = tiny_spec()
    spec["programs"] = [
        dict(spec["programs"][0], program_id=f"p{i}", family=f"f{i}", compute_ratio=r)
        for i, r in enumerate([0.1, 1.0, 5.0])
    ] + [spec["programs"][1]]
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec, indent=1))
    return path


def run(*argv):
    return cli.run([str(a) for a in argv])


def test_help_documents_flags(capsys):
    assert run("--help") == 0
    assert run("eval", "--help") == 0
    out = capsys.readouterr().out
    for flag in ("--seed", "--grid", "--out", "--corpus", "--learner", "--top-pct",
                 "--target-nr", "--w2", "--w3", "--config", "--budget"):
        assert flag in out
    assert run("train", "--help") == 0
    assert "--model" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert run("bogus") == 2
    assert run("sweep", "--seed", 1, "--frobnicate") == 2
    assert run("sweep") == 2  # seed is mandatory
    assert "--seed" in capsys.readouterr().err
    assert run("eval", "loocv", "--seed", 1, "--learner", "ann") == 2


def test_missing_input_file(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert run("gen", "--seed", 1, "--corpus", missing) == 1
    assert str(missing) in capsys.readouterr().err


def test_sweep_default_workload(tmp_path):
    assert run("sweep", "--seed", 3, "--out", tmp_path) == 0
    lines = (tmp_path / "heatmap.csv").read_text().splitlines()
    assert lines[0] == "partitions,tasks,speedup" and len(lines) == 100


def test_gen_train_predict(tmp_path, spec_file, capsys):
    out = tmp_path / "c"
    assert run("gen", "--seed", 1, "--corpus", spec_file, "--grid", GRID, "--out", out) == 0
    model = tmp_path / "m.json"
    assert run("train", "--seed", 1, "--corpus", out, "--model", model, "--target-nr", 2) == 0
    capsys.readouterr()
    t0 = time.perf_counter()
    assert run("predict", "--seed", 1, "--corpus", out, "--model", model, "--sample", "p1/n2048") == 0
    assert time.perf_counter() - t0 < 0.1
    line = capsys.readouterr().out.strip()
    assert line.startswith("partitions=") and " tasks=" in line

    feats = tmp_path / "f.json"
    corpus_doc = json.loads((out / "corpus.json").read_text())
    feats.write_text(json.dumps({k: float(v) for k, v in corpus_doc["samples"][0]["features"].items()}))
    assert run("predict", "--seed", 1, "--model", model, "--features", feats) == 0
    assert capsys.readouterr().out.startswith("partitions=")


def test_predict_needs_model(capsys):
    assert run("predict", "--seed", 1) == 2


def test_label(tmp_path, spec_file):
    assert run("label", "--seed", 2, "--corpus", spec_file, "--grid", GRID, "--out", tmp_path) == 0
    rows = (tmp_path / "labels.csv").read_text().splitlines()
    assert rows[0].startswith("sample_id,program_id") and len(rows) == 1 + 6
    assert json.loads((tmp_path / "labels.json").read_text())["classes"] >= 1
    assert run("label", "--seed", 2, "--corpus", spec_file, "--grid", GRID, "--raw",
               "--out", tmp_path / "raw") == 0


@pytest.mark.parametrize("mode", ["loocv", "cross-suite", "compare", "ablation", "correlation"])
def test_eval_modes(tmp_path, spec_file, mode):
    assert run("eval", mode, "--seed", 4, "--corpus", spec_file, "--grid", GRID,
               "--budget", 10, "--out", tmp_path) == 0
    assert (tmp_path / "summary.json").exists()
    if mode == "ablation":
        assert (tmp_path / "merged.csv").exists() and (tmp_path / "unmerged.csv").exists()
    else:
        assert (tmp_path / "report.csv").read_text().startswith("scheme,program,dataset")
    if mode == "correlation":
        assert (tmp_path / "ratio_speedup.csv").exists()


def test_eval_compare_reproducible(tmp_path, spec_file):
    for sub in ("a", "b"):
        assert run("eval", "compare", "--seed", 4, "--corpus", spec_file, "--grid", GRID,
                   "--budget", 10, "--out", tmp_path / sub) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_anneal(tmp_path):
    assert run("anneal", "--seed", 5, "--budget", 15, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "anneal.json").read_text())
    assert doc["budget"] == 15 and doc["sample"].startswith("overlap-balanced/")


def test_config_file_and_override(tmp_path, spec_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2, "corpus": str(spec_file), "grid": GRID,
                               "target-nr": 1, "out": str(tmp_path / "x")}))
    assert run("label", "--config", cfg) == 0
    assert json.loads((tmp_path / "x" / "labels.json").read_text())["classes"] <= 3
    assert run("label", "--config", cfg, "--out", tmp_path / "y") == 0
    assert (tmp_path / "y" / "labels.csv").exists()
    cfg.write_text(json.dumps({"seed": 2, "nonsense": 1}))
    assert run("label", "--config", cfg) == 2


def test_runtime_error_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("gen", "--seed", 1, "--corpus", bad) == 1
    assert "line" in capsys.readouterr().err
