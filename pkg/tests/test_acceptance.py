"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line. Trained models
are cached per task kind for the whole module, so criteria 1, 8 and 10 share
the same runs.
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guardnet import constraints as c
from guardnet.data import TASK_KINDS, generate_task, load_task, write_task
from guardnet.intervals import BoundsBox, propagate
from guardnet.network import Activation, LayerParams, Network, backward, forward, last_layer_vector
from guardnet.smt.check import check_weights_satisfy
from guardnet.smt.maxsmt import fu_malik_maxsmt
from guardnet.trainer import TrainConfig, build_network, initialize_feasible, select_line_search, train, train_baseline
from guardnet.verify import (
    adversity_index,
    constraint_accuracy,
    find_counterexample,
    predictive_metrics,
    truth_outputs,
)

from conftest import HAVE_SOLVER, brute_force_max, random_linear_instance, random_net

pytestmark = pytest.mark.skipif(not HAVE_SOLVER, reason="needs an SMT solver")

ROWS = 300
SEED = 1
DELTA = 0.1


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


@dataclass
class Run:
    data: object
    K: c.DomainConstraint
    constrained: object
    baseline: object
    verify_seconds: float
    accuracy: float
    adi: object


class _Runs:
    """Trains each task kind once, on first request."""

    def __init__(self, root, solver):
        self.root, self.solver, self.cache = root, solver, {}

    def get(self, kind) -> Run:
        if kind not in self.cache:
            task = generate_task(kind, ROWS, seed=SEED)
            paths = write_task(task, self.root / kind)
            data, K = load_task(paths["data"], paths["schema"], paths["constraint"], seed=SEED)
            cfg = TrainConfig.from_dict(dict(task.config, seed=SEED))
            n_out, kind_ = data.schema.n_outputs, data.schema.task
            base = train_baseline(
                data.X_train, data.y_train, kind_, cfg, data.X_val, data.y_val, n_out, sorted(K.features())
            )
            res = train(data.X_train, data.y_train, K, kind_, cfg, data.X_val, data.y_val, n_out, self.solver)
            t0 = time.perf_counter()
            acc = constraint_accuracy(res.network, data.X_eval, K)
            adi = adversity_index(res.network, data.X_eval, K, DELTA, self.solver)
            self.cache[kind] = Run(data, K, res, base, time.perf_counter() - t0, acc, adi)
        return self.cache[kind]


@pytest.fixture(scope="module")
def runs(tmp_path_factory, solver):
    return _Runs(tmp_path_factory.mktemp("acceptance"), solver)


# 1 -------------------------------------------------------------------------


@pytest.mark.parametrize("kind", TASK_KINDS)
def test_criterion_1_constraint_guarantee(runs, report, kind):
    r = runs.get(kind)
    hidden = [layer.fan_out for layer in r.constrained.network.layers[:-1]]
    assert len(hidden) == 2 and all(8 <= h <= 16 for h in hidden)
    minutes = (r.constrained.report.wall_clock + r.verify_seconds) / 60
    ok = r.accuracy == 100.0 and r.adi.witnesses == 0 and r.adi.unknown == 0 and minutes <= 30
    report(
        1,
        ok,
        f"{kind}: constraint accuracy {r.accuracy:.1f}% on {len(r.data.X_eval)} train+test instances, "
        f"counterexamples {r.adi.witnesses}, undecided {r.adi.unknown}, {minutes:.1f} min",
    )


# 2 -------------------------------------------------------------------------


@pytest.mark.parametrize("kind", TASK_KINDS)
def test_criterion_2_feasible_start(tmp_path, solver, report, kind):
    task = generate_task(kind, 100, seed=SEED)
    paths = write_task(task, tmp_path)
    data, K = load_task(paths["data"], paths["schema"], paths["constraint"], seed=SEED)
    t0 = time.perf_counter()
    for seed in range(3):
        cfg = TrainConfig.from_dict(dict(task.config, seed=seed))
        net = build_network(K, data.X_train.shape[1], data.schema.n_outputs, cfg)
        net, kp = initialize_feasible(net, K, cfg, solver)
        ok = check_weights_satisfy(last_layer_vector(net), kp, solver, exact=True)
        if not ok:
            break
    took = time.perf_counter() - t0
    report(2, ok and took < 60, f"{kind}: last-layer constraint holds after init, 3 seeds ({took:.1f}s)")


# 3 -------------------------------------------------------------------------


def test_criterion_3_bound_soundness(report):
    rng = np.random.default_rng(2024)
    violations = 0
    t0 = time.perf_counter()
    for k in range(20):
        n_in = int(rng.integers(2, 7))
        widths = [int(w) for w in rng.integers(2, 12, int(rng.integers(1, 4)))]
        skip = tuple(sorted(rng.choice(n_in, int(rng.integers(0, n_in + 1)), replace=False).tolist()))
        act = Activation.RELU if k % 4 else Activation.IDENTITY
        net = random_net(rng, [n_in, *widths, int(rng.integers(1, 4))], skip=skip, activation=act)
        lo = rng.uniform(-1, 1, n_in)
        box = BoundsBox(lo, lo + rng.uniform(0, 2, n_in))
        boxes = propagate(net, box)
        X = box.sample(100_000, rng)
        tr = forward(net, X)
        for b, h in zip(boxes, tr.inputs):
            violations += int((~b.contains(h)).sum())
    took = time.perf_counter() - t0
    report(3, violations == 0 and took < 120, f"20 nets x 1e5 inputs: {violations} bound violations ({took:.1f}s)")


# 4 -------------------------------------------------------------------------


def test_criterion_4_maxsmt_optimality(solver, report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    mismatches = []
    for i in range(50):
        symbols, hard, soft = random_linear_instance(rng, int(rng.integers(1, 7)), n_vars=int(rng.integers(1, 4)))
        H = [a.to_smt(symbols) for a in hard]
        S = [a.to_smt(symbols) for a in soft]
        best = brute_force_max(H, S, symbols, solver)
        got = fu_malik_maxsmt(H, S, symbols, solver)
        if got is None or got.satisfied_count != best:
            mismatches.append((i, best, None if got is None else got.satisfied_count))
    took = time.perf_counter() - t0
    report(4, not mismatches and took < 600, f"50 instances, {len(mismatches)} mismatches vs brute force ({took:.1f}s)")


# 5 -------------------------------------------------------------------------


def _loss(net, X, y, task):
    return backward(net, X, y, task)[0]


def test_criterion_5_gradients(report):
    rng = np.random.default_rng(5)
    cases = [("regression", 2), ("multiclass", 3), ("binary", 1), ("multilabel", 3), ("binary", 2)]
    worst = 0.0
    h = 1e-5
    t0 = time.perf_counter()
    for task, out in cases:
        net = random_net(rng, [3, 4, 3, out], skip=(1,))
        X = rng.random((8, 3))
        if task == "regression":
            y = rng.normal(size=(8, out))
        elif task == "multilabel" or out == 1:
            y = (rng.random((8, out)) > 0.5).astype(float)
        else:
            y = rng.integers(0, out, 8)
        _, g = backward(net, X, y, task)
        for n, layer in enumerate(net.layers):
            for arr, grad in ((layer.weights, g.weights[n]), (layer.bias, g.biases[n])):
                for idx in np.ndindex(arr.shape):
                    old = arr[idx]
                    arr[idx] = old + h
                    up = _loss(net, X, y, task)
                    arr[idx] = old - h
                    down = _loss(net, X, y, task)
                    arr[idx] = old
                    fd = (up - down) / (2 * h)
                    worst = max(worst, abs(fd - grad[idx]) / max(1e-6, abs(fd), abs(grad[idx])))
    took = time.perf_counter() - t0
    report(5, worst <= 1e-4 and took < 60, f"5 nets, worst relative error {worst:.2e} ({took:.1f}s)")


# 6 -------------------------------------------------------------------------


def test_criterion_6_line_search_rule(report):
    failures = []

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.booleans(), min_size=1, max_size=12))
    def check(pattern):
        cands = [np.array([float(i)]) for i in range(len(pattern))]
        got = select_line_search(cands, lambda w: pattern[int(w[0])])
        want = max((i + 1 for i, ok in enumerate(pattern) if ok), default=None)
        if got != want:
            failures.append((pattern, got, want))
        assert got == want

    check()
    report(6, not failures, f"300 feasibility patterns, {len(failures)} wrong selections")


# 7 -------------------------------------------------------------------------


def test_criterion_7_adversity_index(solver, report):
    net = Network(
        [
            LayerParams(np.array([[1.0]]), np.array([0.0]), Activation.RELU),
            LayerParams(np.array([[1.0]]), np.array([0.0]), Activation.IDENTITY),
        ],
        (),
        1,
    )
    K = c.DomainConstraint(c.Compare(c.OutputComponent(0), "<=", c.Constant(0.8)), input_box=BoundsBox.unit(1))
    res = adversity_index(net, np.array([[0.1], [0.4], [0.75]]), K, 0.1, solver)
    report(7, res.adi == 1 / 3, f"AdI {res.adi!r}, verdicts {res.verdicts}")


# 8 -------------------------------------------------------------------------


def test_criterion_8_predictive_sanity(runs, report):
    den = runs.get("conditional-denial")
    acc = predictive_metrics(den.constrained.network, den.data.X_test, den.data.y_test, "binary", den.K)["accuracy"]
    labels = np.asarray(den.data.y_test).astype(int).reshape(-1)
    majority = 100.0 * np.bincount(labels).max() / len(labels)
    bud = runs.get("sum-budget")
    # both sides are measured on test rows whose targets satisfy the constraint,
    # the same rows predictive_metrics keeps
    y = np.asarray(bud.data.y_test)
    keep = c.satisfied(bud.K, bud.data.X_test, truth_outputs(y, "regression", y.shape[1]))
    mse = predictive_metrics(bud.constrained.network, bud.data.X_test, y, "regression", bud.K)["mse"]
    var = float(np.mean(np.var(y[keep], axis=0)))
    ok = acc >= 70.0 and acc > majority and mse <= 0.5 * var
    report(
        8,
        ok,
        f"conditional-denial accuracy {acc:.1f}% (majority {majority:.1f}%); "
        f"sum-budget MSE {mse:.4f} vs 0.5 x variance {0.5 * var:.4f}",
    )


# 9 -------------------------------------------------------------------------


def _has_witness(net, X, K, solver) -> bool:
    """AdI > 0, found by stopping at the first confirmed counterexample."""
    return any(find_counterexample(net, K, x, DELTA, solver).status == "witness" for x in X)


def test_criterion_9_baseline_contrast(tmp_path, solver, report):
    t0 = time.perf_counter()
    contrasted = {}
    for kind in TASK_KINDS:
        hits, clean = 0, []
        for seed in range(5):
            task = generate_task(kind, ROWS, seed=seed)
            paths = write_task(task, tmp_path / f"{kind}_{seed}")
            data, K = load_task(paths["data"], paths["schema"], paths["constraint"], seed=seed)
            cfg = TrainConfig.from_dict(dict(task.config, seed=seed))
            net = train_baseline(
                data.X_train, data.y_train, data.schema.task, cfg, data.X_val, data.y_val,
                data.schema.n_outputs, sorted(K.features()),
            ).network
            if constraint_accuracy(net, data.X_eval, K) < 100.0:
                hits += 1
            else:
                clean.append((net, data.X_eval, K))
        # counterexample search is only needed while the majority is still open
        for net, X, K in clean:
            if hits >= 3:
                break
            hits += _has_witness(net, X, K, solver)
        contrasted[kind] = hits
    took = time.perf_counter() - t0
    n_kinds = sum(h >= 3 for h in contrasted.values())
    report(
        9,
        n_kinds >= 3 and took <= 900,
        f"baseline violates on a majority of 5 seeds for {n_kinds}/5 kinds {contrasted} ({took:.0f}s)",
    )


# 10 ------------------------------------------------------------------------


def test_criterion_10_training_time(runs, report):
    times = {k: (runs.get(k).constrained.report.wall_clock, runs.get(k).baseline.report.wall_clock) for k in TASK_KINDS}
    ok = all(con > base for con, base in times.values())
    detail = ", ".join(f"{k} {con:.1f}s vs {base:.2f}s" for k, (con, base) in times.items())
    report(10, ok, f"constrained vs baseline wall clock: {detail}")
