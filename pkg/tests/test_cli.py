"""Command-line interface: parsing, exit codes, file artifacts."""

import json
import os

import numpy as np
import pytest

from stackbench.cli import load_csv, main
from stackbench.core import LoadError, SeededRng
from stackbench.ensembles import algo_to_doc
from stackbench import learners
from stackbench.simgen import SimCondition, generate


def run_cli(*argv):
    return main(list(argv))


def write_dataset_csv(path, n=80, condition="linear-low", seed=3):
    code = run_cli("simulate", "--condition", condition, "--n", str(n),
                   "--seed", str(seed), "--out", str(path))
    assert code == 0
    return path


# --------------------------------------------------------------------------
# simulate

def test_simulate_matches_library_generate(tmp_path):
    out = tmp_path / "d.csv"
    write_dataset_csv(out, n=60, condition="mixed-high", seed=11)
    data = load_csv(out, "y")
    ref = generate(SimCondition("mixed", "high"), 60, SeededRng(11))
    assert data.feature_names == ref.feature_names
    np.testing.assert_array_equal(data.features, ref.features)
    np.testing.assert_array_equal(data.labels, ref.labels)


def test_simulate_writes_meta_sidecar(tmp_path):
    out = tmp_path / "d.csv"
    write_dataset_csv(out, n=60, condition="linear-high-mis", seed=2)
    meta = json.loads((tmp_path / "d.csv.meta.json").read_text())
    assert meta["format"] == "stackbench-dataset-meta"
    assert meta["condition_id"] == "linear-high-mis"
    assert meta["n"] == 60
    assert meta["seed"] == 2
    assert meta["n_flipped"] > 0


def test_simulate_repeat_is_byte_identical(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_dataset_csv(a, seed=9)
    write_dataset_csv(b, seed=9)
    assert a.read_bytes() == b.read_bytes()


def test_simulate_env_seed_equals_flag_seed(tmp_path, monkeypatch):
    flagged = tmp_path / "flag.csv"
    enved = tmp_path / "env.csv"
    write_dataset_csv(flagged, seed=17)
    monkeypatch.setenv("STACKBENCH_SEED", "17")
    code = run_cli("simulate", "--condition", "linear-low", "--n", "80",
                   "--out", str(enved))
    assert code == 0
    assert flagged.read_bytes() == enved.read_bytes()


def test_simulate_bad_env_seed_is_exit_2(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("STACKBENCH_SEED", "not-a-number")
    code = run_cli("simulate", "--condition", "linear-low", "--n", "20",
                   "--out", str(tmp_path / "x.csv"))
    assert code == 2
    assert "STACKBENCH_SEED" in capsys.readouterr().err


def test_simulate_unknown_condition_is_exit_2(tmp_path, capsys):
    code = run_cli("simulate", "--condition", "cubic-low", "--n", "20",
                   "--out", str(tmp_path / "x.csv"))
    assert code == 2
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------
# fit / predict walkthrough

def test_fit_predict_walkthrough(tmp_path, capsys):
    data = write_dataset_csv(tmp_path / "train.csv", n=100, seed=5)
    model_path = tmp_path / "model.json"
    code = run_cli("fit", "--algo", "knn5", "--data", str(data),
                   "--label", "y", "--seed", "0",
                   "--model-out", str(model_path))
    assert code == 0
    captured = capsys.readouterr()
    assert "fit took" in captured.err
    doc = json.loads(model_path.read_text())
    assert "fit_seconds" not in doc

    preds = tmp_path / "probs.csv"
    code = run_cli("predict", "--model", str(model_path),
                   "--data", str(data), "--out", str(preds))
    assert code == 0
    lines = preds.read_text().splitlines()
    assert lines[0] == "prob"
    vals = np.array([float(v) for v in lines[1:]])
    assert vals.size == 100
    assert np.all((vals >= 0.0) & (vals <= 1.0))


def test_fit_is_byte_deterministic(tmp_path):
    data = write_dataset_csv(tmp_path / "train.csv", n=90, seed=4)
    spec_path = tmp_path / "mars.json"
    spec_path.write_text(json.dumps(algo_to_doc(learners.Mars())))
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    for out in (m1, m2):
        assert run_cli("fit", "--algo", str(spec_path), "--data", str(data),
                       "--label", "y", "--seed", "1",
                       "--model-out", str(out)) == 0
    assert m1.read_bytes() == m2.read_bytes()


def test_fit_accepts_spec_document(tmp_path):
    data = write_dataset_csv(tmp_path / "train.csv", n=90)
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(algo_to_doc(learners.Knn(k=3))))
    code = run_cli("fit", "--algo", str(spec_path), "--data", str(data),
                   "--label", "y", "--model-out", str(tmp_path / "m.json"))
    assert code == 0


def test_fit_unknown_algo_is_exit_2(tmp_path, capsys):
    data = write_dataset_csv(tmp_path / "train.csv", n=40)
    code = run_cli("fit", "--algo", "no-such-preset", "--data", str(data),
                   "--label", "y", "--model-out", str(tmp_path / "m.json"))
    assert code == 2
    err = capsys.readouterr().err
    assert "knn5" in err     # the message lists available presets


def test_predict_does_not_mutate_model(tmp_path):
    data = write_dataset_csv(tmp_path / "train.csv", n=60)
    model_path = tmp_path / "model.json"
    run_cli("fit", "--algo", "knn5", "--data", str(data), "--label", "y",
            "--model-out", str(model_path))
    before = model_path.read_bytes()
    run_cli("predict", "--model", str(model_path), "--data", str(data),
            "--out", str(tmp_path / "p.csv"))
    assert model_path.read_bytes() == before


def test_predict_label_column_optional(tmp_path):
    data = write_dataset_csv(tmp_path / "train.csv", n=60)
    model_path = tmp_path / "model.json"
    run_cli("fit", "--algo", "knn5", "--data", str(data), "--label", "y",
            "--model-out", str(model_path))
    # strip the label column and predict on bare features
    lines = (tmp_path / "train.csv").read_text().splitlines()
    header = lines[0].split(",")
    yi = header.index("y")
    bare = [",".join(c for i, c in enumerate(ln.split(",")) if i != yi)
            for ln in lines]
    bare_path = tmp_path / "bare.csv"
    bare_path.write_text("\n".join(bare) + "\n")

    with_y = tmp_path / "with_y.csv"
    without_y = tmp_path / "without_y.csv"
    assert run_cli("predict", "--model", str(model_path), "--data", str(data),
                   "--out", str(with_y)) == 0
    assert run_cli("predict", "--model", str(model_path),
                   "--data", str(bare_path), "--out", str(without_y)) == 0
    assert with_y.read_bytes() == without_y.read_bytes()


def test_predict_missing_model_is_exit_2(tmp_path, capsys):
    data = write_dataset_csv(tmp_path / "d.csv", n=40)
    code = run_cli("predict", "--model", str(tmp_path / "nope.json"),
                   "--data", str(data), "--out", str(tmp_path / "p.csv"))
    assert code == 2
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------
# load_csv diagnostics

def test_load_csv_missing_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(LoadError, match="no column named 'y'"):
        load_csv(p, "y")


def test_load_csv_names_bad_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,0\nfoo,1\n")
    with pytest.raises(LoadError, match=r"row 3, column 'a'"):
        load_csv(p, "y")


def test_load_csv_rejects_nonbinary_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,0\n2,2\n")
    with pytest.raises(LoadError, match=r"row 3.*label must be 0 or 1"):
        load_csv(p, "y")


def test_load_csv_empty_and_header_only(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(LoadError, match="empty"):
        load_csv(empty, "y")
    header_only = tmp_path / "h.csv"
    header_only.write_text("a,y\n")
    with pytest.raises(LoadError, match="no data rows"):
        load_csv(header_only, "y")


def test_load_csv_ragged_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,0\n1,0\n")
    with pytest.raises(LoadError, match="row 3 has 2 fields"):
        load_csv(p, "y")


def test_load_csv_label_anywhere(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,a,b\n1,0.5,2.0\n0,1.5,3.0\n")
    data = load_csv(p, "y")
    assert data.feature_names == ("a", "b")
    np.testing.assert_array_equal(data.labels, [1, 0])
    np.testing.assert_array_equal(data.features[:, 0], [0.5, 1.5])


# --------------------------------------------------------------------------
# bench / report

def test_bench_and_report_from_plan_file(tmp_path):
    plan_doc = {
        "format": "stackbench-plan",
        "version": 1,
        "conditions": ["linear-low", "nonlinear-high"],
        "sizes": [80],
        "replications": 2,
        "algorithms": [
            {"preset": "knn5"},
            {"name": "knn3", "spec": algo_to_doc(learners.Knn(k=3))},
        ],
        "master_seed": 21,
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan_doc))
    results = tmp_path / "results.csv"
    code = run_cli("bench", "--config", str(plan_path),
                   "--out", str(results), "--threads", "2")
    assert code == 0
    lines = results.read_text().splitlines()
    assert lines[0].startswith("condition,relationship,noise,")
    assert len(lines) == 1 + 2 * 1 * 2 * 2
    timings = tmp_path / "results.timings.csv"
    assert timings.exists()
    assert timings.read_text().splitlines()[0] == \
        "condition,n,replication,algorithm,fit_seconds"

    summary = tmp_path / "summary.csv"
    plot = tmp_path / "plot.svg"
    code = run_cli("report", "--results", str(results),
                   "--summary-out", str(summary), "--plot-out", str(plot))
    assert code == 0
    assert len(summary.read_text().splitlines()) == 1 + 2 * 2
    assert plot.read_bytes().startswith(b"<?xml")


def test_bench_threads_do_not_change_results(tmp_path):
    plan_doc = {
        "format": "stackbench-plan", "version": 1,
        "conditions": ["mixed-low"], "sizes": [70], "replications": 2,
        "algorithms": [{"preset": "knn5"}], "master_seed": 8,
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan_doc))
    r1, r2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert run_cli("bench", "--config", str(plan_path), "--out", str(r1),
                   "--threads", "1") == 0
    assert run_cli("bench", "--config", str(plan_path), "--out", str(r2),
                   "--threads", "4") == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_bench_missing_plan_is_exit_2(tmp_path, capsys):
    code = run_cli("bench", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "r.csv"))
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_report_bad_results_is_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("nope\n")
    code = run_cli("report", "--results", str(bad),
                   "--summary-out", str(tmp_path / "s.csv"))
    assert code == 2
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------
# parser behaviour

def test_usage_error_is_exit_1(capsys):
    assert run_cli("simulate", "--condition", "linear-low") == 1  # no --n/--out
    err = capsys.readouterr().err
    assert "usage" in err.lower()


def test_unknown_subcommand_is_exit_1(capsys):
    assert run_cli("frobnicate") == 1
    capsys.readouterr()


def test_version_string(capsys):
    assert run_cli("--version") == 0
    out = capsys.readouterr().out
    assert out.startswith("stackbench 1.0.0")
    assert "model schema 1" in out
    assert "plan schema 1" in out
