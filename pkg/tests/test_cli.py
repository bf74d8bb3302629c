import csv
import json

import numpy as np
import pytest

from latentvar.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, main
from latentvar.data import read_csv


def _gen(tmp_path, name="d.csv", *extra):
    path = tmp_path / name
    assert main(["generate", "--model", "nlvar", "--n", "4", "--p", "2", "--t", "400",
                 "--seed", "7", "-o", str(path), *extra]) == 0
    return path


def test_generate_shape_and_determinism(tmp_path):
    path = tmp_path / "d.csv"
    assert main(["generate", "--model", "nlvar", "--n", "10", "--p", "4", "--t", "1000",
                 "--seed", "7", "-o", str(path)]) == 0
    rows = path.read_text().splitlines()
    assert len(rows) == 1001 and len(rows[0].split(",")) == 10
    truth = json.loads((tmp_path / "d.truth.json").read_text())
    assert truth["generator"]["run_config"]["seed"] == 7
    first = path.read_bytes(), (tmp_path / "d.truth.json").read_bytes()
    path2 = tmp_path / "e.csv"
    assert main(["generate", "--model", "nlvar", "--n", "10", "--p", "4", "--t", "1000",
                 "--seed", "7", "-o", str(path2)]) == 0
    assert path2.read_bytes() == first[0]


def test_generate_lorenz_truth(tmp_path):
    path = tmp_path / "l.csv"
    assert main(["generate", "--model", "lorenz96", "--n", "10", "--force", "10", "--t", "200",
                 "-o", str(path)]) == 0
    adj = np.array(json.loads((tmp_path / "l.truth.json").read_text())["adjacency"])
    assert np.all(adj.sum(axis=1) == 4)


def test_train_linear_outputs(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--method", "linear", "--lambda", "0", "--lag", "2",
                 "--data", str(data), "-o", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["nmse_train"] < 1.0
    assert rep["run_config"]["method"] == "linear" and rep["run_config"]["lam"] == "0"
    for name in ("model.json", "adjacency.csv", "trace.csv", "roc.csv"):
        assert (out / name).exists()
    with open(out / "adjacency.csv") as fh:
        assert len(list(csv.reader(fh))) == 5


def test_train_auto_lambda_records_grid(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--method", "f_b", "--lambda", "auto", "--epochs", "2", "--lag", "2",
                 "--data", str(data), "-o", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    grid = rep["lambda_grid"]
    assert len(grid) == 13
    best = min(grid, key=lambda g: g["val_nmse"])
    assert rep["lambda"] == best["lambda"]
    assert rep["nmse_val"] == pytest.approx(best["val_nmse"], rel=1e-12)


def test_train_fa_epoch0_matches_linear(tmp_path):
    data = tmp_path / "d.csv"
    assert main(["generate", "--t", "1000", "--seed", "0", "-o", str(data)]) == 0
    reps = {}
    for method, extra in (("f_a", ["--epochs", "0"]), ("linear", [])):
        out = tmp_path / method
        assert main(["train", "--method", method, "--lambda", "0", "--data", str(data),
                     "-o", str(out), *extra]) == 0
        reps[method] = json.loads((out / "report.json").read_text())
    assert reps["f_a"]["nmse_test"] == pytest.approx(reps["linear"]["nmse_test"], rel=0.02)


def test_eval_reproduces_train_report(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--method", "f_a", "--lambda", "0.001", "--epochs", "2", "--lag", "2",
                 "--data", str(data), "-o", str(out)]) == 0
    ev = tmp_path / "ev"
    assert main(["eval", "--model", str(out / "model.json"), "--data", str(data), "-o", str(ev)]) == 0
    a = json.loads((out / "report.json").read_text())
    b = json.loads((ev / "report.json").read_text())
    for k in ("nmse_train", "nmse_val", "nmse_test", "auroc"):
        assert a[k] == b[k]


def test_config_file_merging(tmp_path):
    data = _gen(tmp_path)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method": "f_b", "lambda": 0.01, "epochs": 1, "lag": 3}))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--lag", "2", "--data", str(data), "-o", str(out)]) == 0
    rc = json.loads((out / "report.json").read_text())["run_config"]
    assert rc["method"] == "f_b" and rc["lam"] == 0.01 and rc["lag"] == 2 and rc["epochs"] == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["train", "--config", str(bad), "--data", str(data)]) == EXIT_CONFIG


def test_exit_codes(tmp_path, capsys):
    data = _gen(tmp_path)
    assert main(["train", "--method", "bogus", "--data", str(data)]) == EXIT_CONFIG
    assert main(["train", "--method", "linear", "--lambda", "-1", "--data", str(data)]) == EXIT_CONFIG
    assert main(["train", "--data", str(tmp_path / "missing.csv")]) == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,x\n")
    assert main(["train", "--data", str(bad)]) == EXIT_DATA
    assert "row 3, column 2" in capsys.readouterr().err
    assert main(["train", "--method", "f_b", "--lambda", "0", "--eta-p", "10", "--lag", "2",
                 "--data", str(data), "-o", str(tmp_path / "x")]) == EXIT_DIVERGED
    assert main(["generate"]) == EXIT_CONFIG
    assert main([]) == 2


def test_experiment_single_cell(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["experiment", "--methods", "linear", "--seeds", "1", "--n", "4", "--p", "2",
                 "--t", "300", "--lambda", "0.001", "--threads", "1", "-o", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["method"] == "linear" and rows[0]["failed"] == "0"
    assert (tmp_path / "s.runs.csv").exists()
    cfg = json.loads((tmp_path / "s.config.json").read_text())
    assert cfg["manifest"]["cells"][0]["seeds"] == [0]


def test_experiment_manifest_order_invariant(tmp_path):
    cells = [{"method": "linear", "dataset": {"n": 4, "p": 2, "t": 300}, "seeds": 2, "grid": 0.001},
             {"method": "f_b", "dataset": {"n": 4, "p": 2, "t": 300}, "seeds": 2, "grid": 0.001,
              "lag": 2}]
    outs = []
    for k, order in enumerate((cells, cells[::-1])):
        m = tmp_path / f"m{k}.json"
        m.write_text(json.dumps({"cells": order}))
        out = tmp_path / f"s{k}.csv"
        assert main(["experiment", "--manifest", str(m), "--epochs", "2", "--threads", "1",
                     "-o", str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == 3
