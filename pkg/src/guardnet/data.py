"""CSV ingestion, min-max scaling, and synthetic tasks with planted label violations."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import constraints as c
from .intervals import BoundsBox
from .network import TaskKind

log = logging.getLogger(__name__)

SPLIT = (0.7, 0.2, 0.1)


class DataError(ValueError):
    pass


@dataclass
class FeatureSpec:
    name: str
    kind: str = "continuous"  # or "categorical"


@dataclass
class DatasetSchema:
    features: list
    targets: list
    task: TaskKind
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = [f if isinstance(f, FeatureSpec) else FeatureSpec(**f) for f in self.features]
        self.task = TaskKind(self.task)
        names = self.feature_names + list(self.targets)
        if len(set(names)) != len(names):
            raise DataError("feature and target names must be unique")
        for f in self.features:
            if f.kind not in ("continuous", "categorical"):
                raise DataError(f"unknown feature kind {f.kind!r}")
        if self.task in (TaskKind.BINARY, TaskKind.MULTICLASS) and len(self.targets) != 1:
            raise DataError("classification tasks take a single target column")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def output_names(self) -> list[str]:
        if self.task in (TaskKind.BINARY, TaskKind.MULTICLASS) and self.class_names:
            return list(self.class_names)
        return list(self.targets)

    @property
    def n_outputs(self) -> int:
        return len(self.output_names)

    def to_dict(self) -> dict:
        return {
            "features": [{"name": f.name, "kind": f.kind} for f in self.features],
            "targets": list(self.targets),
            "task": self.task.value,
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        try:
            return cls(doc["features"], doc["targets"], doc["task"], doc.get("class_names", []))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"invalid schema: {e}") from None

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read schema {path}: {e}") from None


@dataclass
class ScaledDataset:
    schema: DatasetSchema
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    feature_lo: np.ndarray
    feature_span: np.ndarray
    target_lo: np.ndarray | None = None
    target_span: np.ndarray | None = None

    @property
    def input_box(self) -> BoundsBox:
        return BoundsBox(self.X_train.min(axis=0), self.X_train.max(axis=0))

    @property
    def X_eval(self) -> np.ndarray:
        """Training and test instances together."""
        return np.concatenate([self.X_train, self.X_test])

    @property
    def y_eval(self) -> np.ndarray:
        return np.concatenate([self.y_train, self.y_test])

    def unscale_features(self, Xs) -> np.ndarray:
        return self.feature_lo + np.asarray(Xs) * self.feature_span

    def scale_features(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.where(self.feature_span > 0, c.scale_value(X, self.feature_lo, _safe(self.feature_span)), 0.0)


def _safe(span):
    return np.where(span > 0, span, 1.0)


def read_csv(path, columns: Sequence[str]) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    missing = [col for col in columns if col not in header]
    if missing:
        raise DataError(f"{path} is missing column(s): {', '.join(missing)}")
    idx = [header.index(col) for col in columns]
    out = np.empty((len(rows) - 1, len(columns)))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DataError(f"{path}:{r + 2}: expected {len(header)} cells, got {len(row)}")
        for k, j in enumerate(idx):
            try:
                out[r, k] = float(row[j])
            except ValueError:
                raise DataError(f"{path}:{r + 2}: non-numeric value {row[j]!r} in column {columns[k]}") from None
    if not np.all(np.isfinite(out)):
        raise DataError(f"{path}: non-finite values")
    return out


def minmax(A: np.ndarray, names: Sequence[str] = ()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo = A.min(axis=0)
    span = A.max(axis=0) - lo
    for j in np.flatnonzero(span == 0):
        log.warning("column %s is constant; scaled to 0", names[j] if names else j)
    scaled = np.where(span > 0, c.scale_value(A, lo, _safe(span)), 0.0)
    return scaled, lo, span


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(SPLIT[0] * n))
    n_test = int(round(SPLIT[1] * n))
    return order[:n_train], order[n_train : n_train + n_test], order[n_train + n_test :]


def load_and_scale(csv_path, schema: DatasetSchema, seed: int = 0) -> ScaledDataset:
    """Read, min-max scale every feature to [0, 1], and split 70/20/10."""
    X = read_csv(csv_path, schema.feature_names)
    Y = read_csv(csv_path, schema.targets)
    if len(X) < 3:
        raise DataError("need at least 3 rows")
    Xs, flo, fspan = minmax(X, schema.feature_names)
    tlo = tspan = None
    if schema.task is TaskKind.REGRESSION:
        y, tlo, tspan = minmax(Y, schema.targets)
    elif schema.task is TaskKind.MULTILABEL:
        y = (Y > 0).astype(int)
    else:
        y = Y[:, 0]
        if np.any(y != np.round(y)) or y.min() < 0:
            raise DataError("class labels must be non-negative integers")
        y = y.astype(int)
        if y.max() >= schema.n_outputs and not (schema.task is TaskKind.BINARY and schema.n_outputs == 1):
            raise DataError("class label exceeds the number of classes")
        if schema.task is TaskKind.BINARY and schema.n_outputs == 1:
            if y.max() > 1:
                raise DataError("binary labels must be 0 or 1")
            y = y.reshape(-1, 1)
    tr, te, va = split_indices(len(Xs), seed)
    return ScaledDataset(schema, Xs[tr], y[tr], Xs[te], y[te], Xs[va], y[va], flo, fspan, tlo, tspan)


def scaled_constraint(K: c.DomainConstraint, data: ScaledDataset) -> c.DomainConstraint:
    """Move a raw-unit constraint into the scaled space and attach the training box."""
    Ks = c.rescale(K, data.feature_lo, data.feature_span, data.target_lo, data.target_span)
    return Ks.with_box(data.input_box)


def load_task(csv_path, schema_path, constraint_path, seed: int = 0) -> tuple[ScaledDataset, c.DomainConstraint]:
    schema = DatasetSchema.load(schema_path)
    data = load_and_scale(csv_path, schema, seed)
    try:
        K = c.load_constraint(constraint_path, schema.feature_names, schema.output_names)
    except OSError as e:
        raise DataError(f"cannot read constraint {constraint_path}: {e}") from None
    return data, scaled_constraint(K, data)


# synthetic tasks -----------------------------------------------------------

TASK_KINDS = (
    "sum-budget",
    "conditional-denial",
    "guarded-multiclass",
    "threshold-multilabel",
    "permutation-preference",
)


@dataclass
class GeneratedTask:
    schema: DatasetSchema
    columns: list
    rows: np.ndarray
    constraint: dict
    config: dict


def _cmp(op, lhs, rhs) -> dict:
    return {"cmp": op, "lhs": lhs, "rhs": rhs}


def _f(name) -> dict:
    return {"feature": name}


def _o(name) -> dict:
    return {"output": name}


def _k(v) -> dict:
    return {"const": v}


def _base_config(**kw) -> dict:
    cfg = dict(
        hidden=[12, 12],
        batch_size=10,
        epochs=6,
        learning_rate=0.1,
        max_step=0.1,
        line_search_steps=5,
        seed=0,
        solver_timeout_ms=20000,
    )
    cfg.update(kw)
    return cfg


def _n_violations(rate: float, n: int) -> int:
    """Rows to corrupt: none at rate 0, otherwise at least one."""
    return 0 if rate <= 0 else max(1, int(round(rate * n)))


def _sum_budget(n: int, rng: np.random.Generator, rate: float) -> GeneratedTask:
    income = np.round(rng.uniform(2000, 10000, n), 2)
    size = rng.integers(1, 6, n).astype(float)
    urban = (rng.random(n) < 0.5).astype(float)
    age = np.round(rng.uniform(20, 70, n), 1)
    saving = np.round(rng.uniform(0.0, 0.3, n), 3)
    housing = income * (0.22 + 0.06 * urban) + rng.normal(0, 80, n)
    food = 120 * size + 0.04 * income + rng.normal(0, 60, n)
    leisure = income * (0.12 - 0.25 * (saving - 0.15)) * (1.2 - age / 100) + rng.normal(0, 40, n)
    Y = np.clip(np.stack([housing, food, leisure], axis=1), 0, None)
    # keep clean rows clean, then push some rows over the budget
    total = Y.sum(axis=1)
    over = total > 0.95 * income
    Y[over] *= (0.95 * income[over] / total[over])[:, None]
    Y[:, 2] = np.minimum(Y[:, 2], 0.15 * income)
    bad = rng.choice(n, size=_n_violations(rate, n), replace=False)
    Y[bad] *= (rng.uniform(1.05, 1.3, len(bad)) * income[bad] / Y[bad].sum(axis=1))[:, None]
    Y = np.round(Y, 2)
    feats = ["income", "household_size", "urban", "age", "saving_rate"]
    kinds = ["continuous", "continuous", "categorical", "continuous", "continuous"]
    targets = ["housing", "food", "leisure"]
    schema = DatasetSchema([FeatureSpec(a, b) for a, b in zip(feats, kinds)], targets, TaskKind.REGRESSION)
    K = {
        "name": "expenses within budget",
        "premise": True,
        "conclusion": {
            "and": [
                _cmp("<=", {"sum": [_o(t) for t in targets]}, _f("income")),
                _cmp("<=", _o("leisure"), {"scale": 0.15, "term": _f("income")}),
            ]
        },
    }
    rows = np.column_stack([income, size, urban, age, saving, Y])
    cfg = _base_config(thresholds=[0.1], epochs=20)
    return GeneratedTask(schema, feats + targets, rows, K, cfg)


def _conditional_denial(n: int, rng: np.random.Generator, rate: float) -> GeneratedTask:
    income = np.round(rng.uniform(1000, 12000, n), 0)
    credit = (rng.random(n) < 0.6).astype(float)
    debt = np.round(rng.uniform(0, 5000, n), 0)
    years = np.round(rng.uniform(0, 30, n), 1)
    age = np.round(rng.uniform(20, 70, n), 0)
    dependents = rng.integers(0, 5, n).astype(float)
    s = 2.2 * credit + (income - 5000) / 2000 - debt / 2000 + 0.06 * years - 0.2 * dependents - 0.6
    loan = (s + rng.normal(0, 0.4, n) > 0).astype(int)
    premise = (income < 5000) & (credit == 0)
    loan[premise] = 0
    pool = np.flatnonzero(premise)
    k = min(len(pool), int(round(rate * n)))
    loan[rng.choice(pool, size=k, replace=False)] = 1
    feats = ["income", "credit_history", "debt", "employment_years", "age", "dependents"]
    kinds = ["continuous", "categorical", "continuous", "continuous", "continuous", "continuous"]
    schema = DatasetSchema(
        [FeatureSpec(a, b) for a, b in zip(feats, kinds)], ["loan"], TaskKind.BINARY, ["no_loan", "loan"]
    )
    K = {
        "name": "deny risky applicants",
        "premise": {"and": [_cmp("<", _f("income"), _k(5000)), _cmp("=", _f("credit_history"), _k(0))]},
        "conclusion": _cmp(">", _o("no_loan"), _o("loan")),
    }
    rows = np.column_stack([income, credit, debt, years, age, dependents, loan])
    return GeneratedTask(schema, feats + ["loan"], rows, K, _base_config(thresholds=[0, 1, 2], epochs=8))


GENRES = ["classical", "electronic", "metal", "pop", "rock"]


def _guarded_multiclass(n: int, rng: np.random.Generator, rate: float) -> GeneratedTask:
    proto = np.array(
        [  # tempo, energy, acousticness, danceability, loudness
            [0.3, 0.2, 0.9, 0.2, 0.2],
            [0.7, 0.7, 0.1, 0.9, 0.6],
            [0.8, 0.95, 0.1, 0.3, 0.95],
            [0.5, 0.6, 0.4, 0.8, 0.5],
            [0.6, 0.8, 0.3, 0.5, 0.75],
        ]
    )
    genre = rng.integers(0, len(GENRES), n)
    beatles = rng.random(n) < 0.12
    genre[beatles] = rng.choice([3, 4], size=int(beatles.sum()))
    A = np.clip(proto[genre] + rng.normal(0, 0.12, (n, 5)), 0, 1)
    year = np.round(np.where(beatles, rng.uniform(1962, 1970, n), rng.uniform(1950, 2020, n)), 0)
    pool = np.flatnonzero(beatles)
    k = min(len(pool), _n_violations(rate, n))
    genre[rng.choice(pool, size=k, replace=False)] = rng.choice([0, 1, 2], size=k)
    feats = ["tempo", "energy", "acousticness", "danceability", "loudness", "year", "artist_beatles"]
    kinds = ["continuous"] * 6 + ["categorical"]
    schema = DatasetSchema(
        [FeatureSpec(a, b) for a, b in zip(feats, kinds)], ["genre"], TaskKind.MULTICLASS, GENRES
    )
    K = {
        "name": "beatles songs are pop or rock",
        "premise": _cmp("=", _f("artist_beatles"), _k(1)),
        "conclusion": {
            "and": [
                _cmp("<", _o("classical"), _k(0)),
                _cmp("<", _o("electronic"), _k(0)),
                _cmp("<", _o("metal"), _k(0)),
                {"or": [_cmp(">", _o("pop"), _k(0)), _cmp(">", _o("rock"), _k(0))]},
            ]
        },
    }
    rows = np.column_stack([np.round(A, 4), year, beatles.astype(float), genre])
    return GeneratedTask(schema, feats + ["genre"], rows, K, _base_config(thresholds=[0, 1, 2]))


def _threshold_multilabel(n: int, rng: np.random.Generator, rate: float) -> GeneratedTask:
    L, d, threshold = 6, 8, 4
    X = rng.random((n, d))
    W = rng.normal(0, 1, (d, L))
    z = (X - 0.5) @ W
    Y = (z + rng.normal(0, 0.3, (n, L)) > np.quantile(z, 0.45, axis=0)).astype(int)
    value = np.arange(1, L + 1)
    ok = (Y * value).sum(axis=1) > threshold
    # lift clean rows above the threshold by switching on the top label
    Y[~ok, L - 1] = 1
    bad = rng.choice(n, size=_n_violations(rate, n), replace=False)
    Y[bad] = 0
    Y[bad, rng.integers(0, 3, len(bad))] = 1
    feats = [f"f{j}" for j in range(d)]
    targets = [f"tag{i}" for i in range(L)]
    schema = DatasetSchema([FeatureSpec(a) for a in feats], targets, TaskKind.MULTILABEL)
    K = {
        "name": "enough weight on positive tags",
        "premise": True,
        "conclusion": _cmp(
            ">",
            {"sum": [{"if_positive": t, "then": _k(i + 1), "else": _k(0)} for i, t in enumerate(targets)]},
            _k(threshold),
        ),
    }
    rows = np.column_stack([np.round(X, 4), Y])
    return GeneratedTask(schema, feats + targets, rows, K, _base_config(thresholds=[0, 1, 2]))


def _permutation_preference(n: int, rng: np.random.Generator, rate: float) -> GeneratedTask:
    items, d = 3, 6
    X = rng.random((n, d))
    V = rng.normal(0, 1, (d, items))
    bias = np.array([0.6, 0.0, -0.6])
    scores = (X - 0.5) @ V + bias + rng.normal(0, 0.3, (n, items))
    rank = np.argsort(np.argsort(-scores, axis=1), axis=1)  # rank of each item
    Y = np.zeros((n, items * items), dtype=int)
    for i in range(items):
        Y[np.arange(n), i * items + rank[:, i]] = 1
    # some rows rank two items equally, breaking the one-per-column rule
    bad = rng.choice(n, size=_n_violations(rate, n), replace=False)
    for r in bad:
        a, b = rng.choice(items, size=2, replace=False)
        Y[r, a * items : (a + 1) * items] = Y[r, b * items : (b + 1) * items]
    feats = [f"u{j}" for j in range(d)]
    targets = [f"item{i}_rank{r}" for i in range(items) for r in range(items)]
    schema = DatasetSchema([FeatureSpec(a) for a in feats], targets, TaskKind.MULTILABEL)
    groups = [[targets[i * items + r] for r in range(items)] for i in range(items)]
    groups += [[targets[i * items + r] for i in range(items)] for r in range(items)]
    K = {
        "name": "coherent ranking",
        "premise": True,
        "conclusion": {"and": [{"exactly": 1, "of": [_cmp(">", _o(t), _k(0)) for t in g]} for g in groups]},
    }
    rows = np.column_stack([np.round(X, 4), Y])
    return GeneratedTask(schema, feats + targets, rows, K, _base_config(thresholds=[0.5], epochs=4))


_GENERATORS = {
    "sum-budget": (_sum_budget, 0.06),
    "conditional-denial": (_conditional_denial, 0.05),
    "guarded-multiclass": (_guarded_multiclass, 0.03),
    "threshold-multilabel": (_threshold_multilabel, 0.04),
    "permutation-preference": (_permutation_preference, 0.03),
}


def generate_task(kind: str, n: int, seed: int = 0, violation_rate: float | None = None) -> GeneratedTask:
    """Synthetic task of the given ``kind`` with ``n`` rows."""
    if kind not in _GENERATORS:
        raise DataError(f"unknown task kind {kind!r}; choose from {', '.join(TASK_KINDS)}")
    if n < 50:
        raise DataError("generators need at least 50 rows")
    fn, default_rate = _GENERATORS[kind]
    rate = default_rate if violation_rate is None else float(violation_rate)
    return fn(int(n), np.random.default_rng(seed), rate)


def write_task(task: GeneratedTask, out_dir) -> dict:
    """Write data.csv, schema.json, constraint.json and config.json; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f"{k}.{ext}" for k, ext in [("data", "csv"), ("schema", "json"), ("constraint", "json"), ("config", "json")]}
    with open(paths["data"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(task.columns)
        for row in task.rows:
            w.writerow([_cell(v) for v in row])
    paths["schema"].write_text(json.dumps(task.schema.to_dict(), indent=2) + "\n")
    paths["constraint"].write_text(json.dumps(task.constraint, indent=2) + "\n")
    paths["config"].write_text(json.dumps(task.config, indent=2) + "\n")
    return {k: str(v) for k, v in paths.items()}


def _cell(v: float) -> str:
    v = float(v)
    return str(int(v)) if v == int(v) else repr(v)
