import json

import pytest

from guardnet.cli import EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_USAGE, main

from conftest import HAVE_SOLVER

needs_solver = pytest.mark.skipif(not HAVE_SOLVER, reason="needs an SMT solver")


@pytest.fixture(scope="module")
def task_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("denial")
    assert main(["gen-data", "--kind", "conditional-denial", "--rows", "400", "--seed", "1", "--out", str(out)]) == 0
    cfg = json.loads((out / "config.json").read_text())
    cfg.update(epochs=1, hidden=[8, 8])  # keep the run short; the guarantee holds after any number of epochs
    (out / "short.json").write_text(json.dumps(cfg))
    return out


def _args(d, *extra):
    return ["--data", str(d / "data.csv"), "--constraint", str(d / "constraint.json"), *extra]


def test_gen_data_files(task_dir):
    names = {p.name for p in task_dir.iterdir()}
    assert {"data.csv", "schema.json", "constraint.json", "config.json"} <= names
    assert len((task_dir / "data.csv").read_text().strip().splitlines()) == 401


@needs_solver
def test_train_then_verify(task_dir, capsys):
    model = task_dir / "model.json"
    log = task_dir / "train.jsonl"
    rc = main(["train", *_args(task_dir, "--seed", "1"), "--config", str(task_dir / "short.json"),
               "--out", str(model), "--report", str(log)])
    assert rc == 0 and model.exists()
    records = [json.loads(line) for line in log.read_text().splitlines()]
    assert records and {"epoch", "batch", "loss", "outcome"} <= set(records[0])
    capsys.readouterr()
    report = task_dir / "verify.json"
    assert main(["verify", *_args(task_dir), "--model", str(model), "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["constraint_accuracy"] == 100.0
    assert doc["adi"] == 0.0 and doc["delta"] == 0.1
    assert json.loads(capsys.readouterr().out) == doc


def test_baseline_and_eval(task_dir, capsys):
    model = task_dir / "base.json"
    assert main(["baseline", *_args(task_dir), "--config", str(task_dir / "config.json"), "--out", str(model)]) == 0
    capsys.readouterr()
    assert main(["eval", *_args(task_dir), "--model", str(model)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0.0 <= doc["constraint_accuracy"] <= 100.0 and doc["adi"] is None
    assert 0.0 <= doc["predictive"]["accuracy"] <= 100.0


def test_missing_solver(task_dir, capsys):
    rc = main(["train", *_args(task_dir), "--config", str(task_dir / "short.json"),
               "--out", str(task_dir / "never.json"), "--solver", "/nonexistent/z3"])
    assert rc == EXIT_SOLVER
    err = capsys.readouterr().err
    assert "not found" in err and "--solver" in err


def test_usage_errors(task_dir, capsys):
    assert main(["train", "--bogus-flag"]) == EXIT_USAGE
    assert main(["gen-data", "--kind", "nonsense", "--out", str(task_dir)]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["--help"]) == 0


def test_config_and_data_errors(task_dir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"lr": -1}))
    assert main(["train", *_args(task_dir), "--config", str(bad), "--out", str(tmp_path / "m.json")]) == EXIT_CONFIG
    assert main(["train", *_args(task_dir), "--config", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "m.json")]) == EXIT_CONFIG
    csv = tmp_path / "data.csv"
    csv.write_text("income,loan\n1,x\n")
    (tmp_path / "schema.json").write_text((task_dir / "schema.json").read_text())
    rc = main(["baseline", "--data", str(csv), "--constraint", str(task_dir / "constraint.json"),
               "--config", str(task_dir / "config.json"), "--out", str(tmp_path / "m.json")])
    assert rc == EXIT_DATA
    assert main(["verify", *_args(task_dir), "--model", str(tmp_path / "none.json")]) == EXIT_DATA
    assert main(["verify", *_args(task_dir), "--model", str(tmp_path / "none.json"), "--delta", "0"]) == EXIT_CONFIG


@needs_solver
def test_infeasible_constraint(task_dir, tmp_path):
    K = json.loads((task_dir / "constraint.json").read_text())
    K["premise"] = True
    K["conclusion"] = {"and": [K["conclusion"], {"not": K["conclusion"]}]}
    path = tmp_path / "k.json"
    path.write_text(json.dumps(K))
    rc = main(["train", "--data", str(task_dir / "data.csv"), "--constraint", str(path),
               "--config", str(task_dir / "short.json"), "--out", str(tmp_path / "m.json")])
    assert rc == EXIT_INFEASIBLE
