import json
import logging

import numpy as np
import pytest

from guardnet import constraints as c
from guardnet.data import (
    TASK_KINDS,
    DataError,
    DatasetSchema,
    FeatureSpec,
    generate_task,
    load_and_scale,
    load_task,
    split_indices,
    write_task,
)
from guardnet.network import TaskKind
from guardnet.verify import truth_outputs


def _write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


SCHEMA = DatasetSchema([FeatureSpec("a"), FeatureSpec("b", "categorical")], ["y"], TaskKind.REGRESSION)


def test_minmax_scaling(tmp_path):
    p = _write_csv(tmp_path / "d.csv", ["a", "b", "y"], [[2, 0, 1.0], [4, 1, 2.0], [6, 0, 3.0]])
    d = load_and_scale(p, SCHEMA, seed=0)
    Xall = np.concatenate([d.X_train, d.X_test, d.X_val])
    assert sorted(Xall[:, 0]) == [0.0, 0.5, 1.0]
    assert d.feature_lo.tolist() == [2.0, 0.0] and d.feature_span.tolist() == [4.0, 1.0]


def test_split_sizes_and_determinism(tmp_path):
    rows = [[i, i % 2, i * 0.5] for i in range(100)]
    p = _write_csv(tmp_path / "d.csv", ["a", "b", "y"], rows)
    d1 = load_and_scale(p, SCHEMA, seed=4)
    d2 = load_and_scale(p, SCHEMA, seed=4)
    assert (len(d1.X_train), len(d1.X_test), len(d1.X_val)) == (70, 20, 10)
    assert np.array_equal(d1.X_train, d2.X_train) and np.array_equal(d1.y_val, d2.y_val)
    d3 = load_and_scale(p, SCHEMA, seed=5)
    assert not np.array_equal(d1.X_train, d3.X_train)
    a, b, v = split_indices(100, 4)
    assert sorted(np.concatenate([a, b, v]).tolist()) == list(range(100))


def test_round_trip_and_box(tmp_path):
    rng = np.random.default_rng(0)
    rows = np.column_stack([rng.uniform(-50, 900, 60), rng.integers(0, 3, 60), rng.random(60)])
    p = _write_csv(tmp_path / "d.csv", ["a", "b", "y"], [[repr(float(v)) for v in r] for r in rows])
    d = load_and_scale(p, SCHEMA, seed=1)
    raw = d.unscale_features(d.X_train)
    assert np.allclose(d.scale_features(raw), d.X_train, rtol=0, atol=1e-12)
    assert np.allclose(d.unscale_features(d.scale_features(rows[:, :2])), rows[:, :2], rtol=0, atol=1e-12)
    assert d.input_box.contains(d.X_train).all()
    assert np.all(d.X_eval >= 0) and np.all(d.X_eval <= 1)


def test_constant_feature_warns(tmp_path, caplog):
    p = _write_csv(tmp_path / "d.csv", ["a", "b", "y"], [[i, 7, i] for i in range(10)])
    with caplog.at_level(logging.WARNING):
        d = load_and_scale(p, SCHEMA)
    assert "b" in caplog.text and "constant" in caplog.text
    assert np.all(d.X_train[:, 1] == 0.0)


@pytest.mark.parametrize(
    "header, rows, msg",
    [
        (["a", "y"], [[1, 2]], "missing column"),
        (["a", "b", "y"], [[1, "x", 2]], "non-numeric"),
        (["a", "b", "y"], [[1, 2]], "expected 3 cells"),
        (["a", "b", "y"], [[1, 2, "inf"]], "non-finite"),
    ],
)
def test_csv_errors(tmp_path, header, rows, msg):
    p = _write_csv(tmp_path / "d.csv", header, rows)
    with pytest.raises(DataError, match=msg):
        load_and_scale(p, SCHEMA)


def test_schema_errors(tmp_path):
    with pytest.raises(DataError):
        DatasetSchema.from_dict({"features": [{"name": "a"}], "targets": ["a"], "task": "regression"})
    with pytest.raises(DataError):
        DatasetSchema.from_dict({"features": [{"name": "a", "kind": "ordinal"}], "targets": ["y"], "task": "regression"})
    with pytest.raises(DataError):
        DatasetSchema.from_dict({"features": [], "targets": ["y"], "task": "ranking"})
    with pytest.raises(DataError):
        DatasetSchema.load(tmp_path / "none.json")
    s = DatasetSchema([FeatureSpec("a")], ["c"], "multiclass", ["x", "y", "z"])
    assert DatasetSchema.from_dict(s.to_dict()) == s and s.n_outputs == 3


def test_bad_class_labels(tmp_path):
    schema = DatasetSchema([FeatureSpec("a")], ["c"], "multiclass", ["x", "y"])
    for bad in (2, -1, 0.5):
        p = _write_csv(tmp_path / "d.csv", ["a", "c"], [[0, 0], [1, 1], [2, bad]])
        with pytest.raises(DataError):
            load_and_scale(p, schema)


# generators -----------------------------------------------------------------


def _label_violations(task):
    schema = task.schema
    K = c.constraint_from_json(task.constraint, schema.feature_names, schema.output_names)
    nf = len(schema.features)
    X, Y = task.rows[:, :nf], task.rows[:, nf:]
    labels = Y if schema.task in (TaskKind.REGRESSION, TaskKind.MULTILABEL) else Y[:, 0]
    return int((~c.satisfied(K, X, truth_outputs(labels, schema.task, schema.n_outputs))).sum())


@pytest.mark.parametrize("kind", TASK_KINDS)
def test_generators_plant_violations(kind):
    task = generate_task(kind, 300, seed=2)
    v = _label_violations(task)
    assert 0 < v < 300
    assert len(task.schema.features) <= 12 and task.schema.n_outputs <= 16
    assert task.rows.shape == (300, len(task.columns))


def test_denial_violation_rate():
    task = generate_task("conditional-denial", 500, seed=1, violation_rate=0.08)
    assert _label_violations(task) == 40


def test_budget_mostly_within():
    task = generate_task("sum-budget", 400, seed=0)
    v = _label_violations(task)
    assert 0 < v < 400 and v <= 0.1 * 400


def test_permutation_labels():
    n_feat = 6
    clean = generate_task("permutation-preference", 200, seed=3, violation_rate=0.0)
    Y = clean.rows[:, n_feat:].reshape(-1, 3, 3)
    assert np.all(Y.sum(axis=2) == 1) and np.all(Y.sum(axis=1) == 1)
    assert _label_violations(clean) == 0
    noisy = generate_task("permutation-preference", 200, seed=3)
    Y = noisy.rows[:, n_feat:].reshape(-1, 3, 3)
    assert np.all(Y.sum(axis=2) == 1)  # each item still gets one rank
    assert np.any(Y.sum(axis=1) != 1)


def test_generator_contracts():
    with pytest.raises(DataError):
        generate_task("sum-budget", 49)
    with pytest.raises(DataError):
        generate_task("image-captions", 100)
    a = generate_task("guarded-multiclass", 80, seed=5)
    b = generate_task("guarded-multiclass", 80, seed=5)
    assert np.array_equal(a.rows, b.rows)


def test_written_task_loads(tmp_path):
    task = generate_task("conditional-denial", 120, seed=0)
    paths = write_task(task, tmp_path / "t")
    assert set(paths) == {"data", "schema", "constraint", "config"}
    data, K = load_task(paths["data"], paths["schema"], paths["constraint"], seed=0)
    assert K.input_box is not None and len(K.input_box) == 6
    assert K.feature_names[0] == "income" and K.output_names == ("no_loan", "loan")
    # raw threshold 5000 moved into scaled units
    income = K.premise.items[0]
    lo, span = data.feature_lo[0], data.feature_span[0]
    assert income.rhs.value == pytest.approx((5000 - lo) / span)
    cfg = json.loads((tmp_path / "t" / "config.json").read_text())
    assert cfg["hidden"] and cfg["epochs"] >= 1
