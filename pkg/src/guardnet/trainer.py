"""Constraint-guaranteed training.

Hidden layers follow plain gradient descent. The output layer only ever
moves to parameters that provably satisfy the translated constraint: first
by a line search along the negative gradient, then by MaxSMT inside a small
box around the current parameters, and otherwise the gradient signs are
randomly flipped on the next batch.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import constraints as c
from .network import (
    Network,
    TaskKind,
    apply_full_step,
    apply_hidden_step,
    backward,
    forward,
    init_standard,
    last_layer_vector,
    set_last_layer,
    split_last_layer,
)
from .smt.check import check_weights_satisfy, model_to_theta
from .smt.emit import LinearAtom, Script
from .smt.maxsmt import fu_malik_maxsmt
from .smt.solver import Sat, Solver, SolverConfig, Unsat
from .translation import TranslatedConstraint, build_soft_constraints, translate

log = logging.getLogger(__name__)

QUANTIFIER_MODES = ("eliminate", "forall")


class ConfigError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    """No output layer satisfying the constraint could be found."""


class TrainingFailed(RuntimeError):
    pass


def default_thresholds(task: TaskKind | str) -> tuple:
    return (0.1,) if TaskKind(task) is TaskKind.REGRESSION else (0.0, 1.0, 2.0)


@dataclass
class TrainConfig:
    hidden: tuple = (16, 16)
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 0.05
    max_step: float = 0.1
    line_search_steps: int = 5
    thresholds: tuple | None = None
    validation_metric: str = "auto"
    seed: int = 0
    skip_features: tuple | None = None
    quantifier_mode: str = "eliminate"
    bound_eps: float = 0.0
    region_bounds: bool = True
    solver_path: str | None = None
    solver_timeout_ms: int = 60_000
    max_maxsmt_rounds: int | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.thresholds is not None:
            self.thresholds = tuple(float(t) for t in self.thresholds)
            if not self.thresholds:
                raise ConfigError("thresholds must be non-empty")
        if self.skip_features is not None:
            self.skip_features = tuple(int(s) for s in self.skip_features)
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not self.max_step > 0:
            raise ConfigError("max_step must be > 0")
        if self.line_search_steps < 1:
            raise ConfigError("line_search_steps must be >= 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("need at least one hidden layer of positive width")
        if self.quantifier_mode not in QUANTIFIER_MODES:
            raise ConfigError(f"quantifier_mode must be one of {QUANTIFIER_MODES}")
        if self.validation_metric not in ("auto", "accuracy", "neg_mse", "jaccard"):
            raise ConfigError(f"unknown validation metric {self.validation_metric!r}")
        if self.solver_timeout_ms <= 0:
            raise ConfigError("solver_timeout_ms must be > 0")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.solver_path, self.solver_timeout_ms, self.seed)

    def thresholds_for(self, task) -> tuple:
        return self.thresholds if self.thresholds is not None else default_thresholds(task)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("hidden", "thresholds", "skip_features"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


@dataclass
class Certificate:
    """Evidence that an output layer satisfied the constraint for its own hidden layers."""

    latent_lo: list
    latent_hi: list
    method: str


@dataclass
class TrainState:
    net: Network
    rng: np.random.Generator
    best: Network | None = None
    best_score: float = -np.inf
    certificate: Certificate | None = None
    restart: bool = False
    epoch: int = 0
    batch: int = 0


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def log(self, **rec) -> None:
        self.records.append(rec)

    def count(self, key: str, value=True) -> int:
        return sum(1 for r in self.records if r.get(key) == value)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r) + "\n")
            fh.write(json.dumps({"final": self.final, "wall_clock": self.wall_clock}) + "\n")


@dataclass
class TrainResult:
    network: Network
    report: TrainReport
    certificate: Certificate | None = None


# scoring -------------------------------------------------------------------


def predict_labels(out: np.ndarray, task: TaskKind) -> np.ndarray:
    task = TaskKind(task)
    if task is TaskKind.REGRESSION:
        return out
    if task is TaskKind.MULTILABEL or out.shape[1] == 1:
        return (out > 0).astype(int)
    return out.argmax(axis=1)


def score(net: Network, X, y, task: TaskKind, metric: str = "auto") -> float:
    task = TaskKind(task)
    if metric == "auto":
        metric = {TaskKind.REGRESSION: "neg_mse", TaskKind.MULTILABEL: "jaccard"}.get(task, "accuracy")
    out = net.predict(X)
    if metric == "neg_mse":
        return -float(np.mean((out - np.asarray(y, dtype=np.float64).reshape(out.shape)) ** 2))
    pred = predict_labels(out, task)
    if metric == "jaccard":
        from .verify import jaccard

        return jaccard(pred, np.asarray(y).reshape(pred.shape))
    return float(np.mean(pred.reshape(-1) == np.asarray(y).reshape(-1)))


# building blocks -----------------------------------------------------------


def modified_sign(g: np.ndarray) -> np.ndarray:
    """Sign with ``sgn(0) = 1``."""
    return np.where(np.asarray(g) >= 0, 1.0, -1.0)


def step_box(theta: np.ndarray, grad: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Axis-parallel box between ``theta`` and ``theta - alpha * sgn(grad)``."""
    other = theta - alpha * modified_sign(grad)
    return np.minimum(theta, other), np.maximum(theta, other)


def restart_flip(grad: np.ndarray, rng: np.random.Generator, p: float = 0.5) -> np.ndarray:
    """Flip the sign of each entry independently with probability ``p``."""
    flips = rng.random(np.shape(grad)) < p
    return np.where(flips, -grad, grad)


def select_line_search(candidates: Sequence[np.ndarray], ok: Callable[[np.ndarray], bool]) -> int | None:
    """Largest 1-based index whose candidate is accepted, or None."""
    for i in range(len(candidates), 0, -1):
        if ok(candidates[i - 1]):
            return i
    return None


def line_search_candidates(theta: np.ndarray, grad: np.ndarray, eta: float, steps: int) -> list[np.ndarray]:
    return [theta - eta * grad * (i / steps) for i in range(1, steps + 1)]


class _Engine:
    """Solver-facing helpers bound to one training run."""

    def __init__(self, config: TrainConfig, solver: Solver | None):
        self.config = config
        self.solver = solver
        self.maxsmt_calls = 0

    def _need_solver(self) -> Solver:
        if self.solver is None:
            self.solver = Solver(self.config.solver_config())
        return self.solver

    def satisfies(self, theta, kp: TranslatedConstraint) -> bool:
        m = kp.float_slack()
        if self.config.quantifier_mode == "forall":
            return check_weights_satisfy(theta, kp, self._need_solver(), exact=True, margin=m)
        return check_weights_satisfy(theta, kp, exact=False, margin=m)

    def _hard(self, kp: TranslatedConstraint, script: Script, margin: float) -> str:
        if self.config.quantifier_mode == "forall":
            return kp.forall_smt(margin)
        return kp.hard_smt(script, margin)

    def _solve(self, kp, extra_hard, softs=None):
        """Run a (Max)SMT query, round, re-check, and retry once with a wider margin.

        Queries ask for twice the slack that :meth:`satisfies` demands, so
        rounding the rational model to doubles rarely costs a retry.
        """
        solver = self._need_solver()
        for margin in (2 * kp.float_slack(), 8 * kp.float_slack()):
            base = Script()
            base.declare_all(kp.symbols)
            hard = [self._hard(kp, base, margin), *extra_hard]
            if softs is None:
                for h in hard:
                    base.add(h)
                out = solver.check(base, kp.symbols)
                if isinstance(out, Unsat):
                    return "unsat", None
                if not isinstance(out, Sat):
                    return "unknown", None
                model, extra = out.model, None
            else:
                self.maxsmt_calls += 1
                res = fu_malik_maxsmt(
                    hard,
                    [s.to_smt(kp.symbols) for s in softs],
                    kp.symbols,
                    solver,
                    base,
                    self.config.max_maxsmt_rounds,
                )
                if res is None:
                    return "undefined", None
                model, extra = res.model, res
            theta = model_to_theta(model, kp.symbols)
            if self.satisfies(theta, kp):
                return "ok", (theta, extra)
            log.info("rounded solver model fails the check; retrying with margin")
        return "rounding", None


INIT_RADII = (0.25, 1.0, 4.0, None)


def initialize_feasible(net: Network, K: c.DomainConstraint, config: TrainConfig, solver: Solver | None = None):
    """Install an output layer satisfying the last-layer constraint (plain satisfiability).

    The standard initialisation is kept when it already satisfies it.
    Otherwise the solver is asked for a feasible layer within a growing box
    around it, and finally anywhere, so the start stays close to the usual
    initial scale.
    """
    eng = _Engine(config, solver)
    kp = translate(K, net, eps=config.bound_eps, refine_regions=config.region_bounds)
    theta0 = last_layer_vector(net)
    if eng.satisfies(theta0, kp):
        return net, kp
    status = "unsat"
    for radius in INIT_RADII:
        extra = [] if radius is None else _box_atoms(theta0 - radius, theta0 + radius, kp.symbols)
        status, found = eng._solve(kp, extra)
        if status == "ok":
            W, b = split_last_layer(net, found[0])
            return set_last_layer(net, W, b), kp
        if status == "unknown":
            break
    raise InfeasibleError(
        f"no feasible output layer at initialisation ({status}); the constraint may be "
        "infeasible over the input box, or the latent box too wide"
    )


def _box_atoms(lo, hi, symbols) -> list[str]:
    n = len(lo)
    out = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        out.append(LinearAtom(e, -lo[k], ">=").to_smt(symbols))
        out.append(LinearAtom(e, -hi[k], "<=").to_smt(symbols))
    return out


def line_search_update(theta, grad, kp, config: TrainConfig, accept: Callable) -> tuple[int, np.ndarray] | None:
    cands = line_search_candidates(theta, grad, config.learning_rate, config.line_search_steps)
    i = select_line_search(cands, lambda w: accept(w, kp))
    return None if i is None else (i, cands[i - 1])


def maxsmt_update(theta, grad, latents, labels, task, kp, config: TrainConfig, engine: _Engine):
    lo, hi = step_box(theta, grad, config.max_step)
    box = _box_atoms(lo, hi, kp.symbols)
    softs = build_soft_constraints(latents, labels, task, config.thresholds_for(task), kp.layout)
    status, found = engine._solve(kp, box, softs)
    if status != "ok":
        return None, status
    theta_new, res = found
    if np.any(theta_new < lo) or np.any(theta_new > hi):
        raise AssertionError("MaxSMT model left the step box")
    return (theta_new, res.satisfied_count, len(softs)), "ok"


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for s in range(0, n, size):
        yield order[s : s + size]


def build_network(K: c.DomainConstraint | None, input_dim: int, output_dim: int, config: TrainConfig) -> Network:
    skip = config.skip_features
    if skip is None:
        skip = tuple(sorted(K.features())) if K is not None else ()
    return init_standard(input_dim, config.hidden, output_dim, skip, seed=config.seed)


def train(
    X,
    y,
    K: c.DomainConstraint,
    task: TaskKind | str,
    config: TrainConfig,
    X_val=None,
    y_val=None,
    output_dim: int | None = None,
    solver: Solver | None = None,
) -> TrainResult:
    """Train with the constraint guaranteed on the whole input box of ``K``."""
    t0 = time.perf_counter()
    task = TaskKind(task)
    X = np.asarray(X, dtype=np.float64)
    if output_dim is None:
        output_dim = _infer_outputs(y, task)
    net = build_network(K, X.shape[1], output_dim, config)
    eng = _Engine(config, solver)
    net, _ = initialize_feasible(net, K, config, eng._need_solver())
    state = TrainState(net, np.random.default_rng(config.seed))
    report = TrainReport()
    has_val = X_val is not None and len(X_val) > 0

    def consider(st: TrainState, kp: TranslatedConstraint) -> bool:
        s = score(st.net, X_val, y_val, task, config.validation_metric) if has_val else 0.0
        if st.best is not None and has_val and not s > st.best_score:
            return False
        if not eng.satisfies(last_layer_vector(st.net), kp):
            raise AssertionError("refusing to store a model without a certificate")
        st.best, st.best_score = st.net.copy(), s
        st.certificate = Certificate(
            kp.latent_box.lo.tolist(), kp.latent_box.hi.tolist(), config.quantifier_mode
        )
        return True

    kp0 = translate(K, state.net, eps=config.bound_eps, refine_regions=config.region_bounds)
    consider(state, kp0)
    ys = np.asarray(y)
    for epoch in range(config.epochs):
        state.epoch = epoch
        for bi, idx in enumerate(_batches(len(X), config.batch_size, state.rng)):
            state.batch = bi
            Xb, yb = X[idx], ys[idx]
            loss, grads = backward(state.net, Xb, yb, task)
            kp = translate(K, state.net, eps=config.bound_eps, refine_regions=config.region_bounds)
            g = np.concatenate([grads.weights[-1].ravel(), grads.biases[-1]])
            if state.restart:
                g = restart_flip(g, state.rng)
            theta = last_layer_vector(state.net)
            rec = dict(epoch=epoch, batch=bi, loss=loss, restart_flip=state.restart)
            hit = line_search_update(theta, g, kp, config, eng.satisfies)
            new = None
            if hit is not None:
                rec.update(line_search="hit", step_index=hit[0])
                new = hit[1]
            else:
                rec["line_search"] = "miss"
                latents = forward(state.net, Xb).inputs[-1]
                found, status = maxsmt_update(theta, g, latents, yb, task, kp, config, eng)
                rec["maxsmt"] = status
                if found is not None:
                    new = found[0]
                    rec.update(maxsmt_satisfied=found[1], maxsmt_total=found[2])
            if new is None:
                state.restart = True
                rec["outcome"] = "restart"
            else:
                W, b = split_last_layer(state.net, new)
                state.net = set_last_layer(state.net, W, b)
                state.restart = False
                rec["outcome"] = "update"
                rec["improved"] = consider(state, kp)
                rec["val_score"] = state.best_score if has_val else None
            state.net = apply_hidden_step(state.net, grads, config.learning_rate)
            report.log(**rec)
    if state.best is None:
        raise TrainingFailed("no feasible model was found; try a smaller max_step or another seed")
    report.wall_clock = time.perf_counter() - t0
    report.final = dict(
        best_val_score=state.best_score if has_val else None,
        maxsmt_calls=eng.maxsmt_calls,
        line_search_hits=report.count("line_search", "hit"),
        restarts=report.count("outcome", "restart"),
        solver_calls=eng.solver.calls if eng.solver else 0,
    )
    return TrainResult(state.best, report, state.certificate)


def _infer_outputs(y, task: TaskKind) -> int:
    y = np.asarray(y)
    if task in (TaskKind.REGRESSION, TaskKind.MULTILABEL):
        return 1 if y.ndim == 1 else y.shape[1]
    if task is TaskKind.BINARY:
        return 1 if y.ndim == 2 else 2
    return int(y.max()) + 1


def train_baseline(
    X,
    y,
    task: TaskKind | str,
    config: TrainConfig,
    X_val=None,
    y_val=None,
    output_dim: int | None = None,
    skip_features: Sequence[int] = (),
) -> TrainResult:
    """Plain mini-batch gradient descent on all layers, same initialisation and batching."""
    t0 = time.perf_counter()
    task = TaskKind(task)
    X = np.asarray(X, dtype=np.float64)
    ys = np.asarray(y)
    if output_dim is None:
        output_dim = _infer_outputs(y, task)
    skip = config.skip_features if config.skip_features is not None else tuple(skip_features)
    net = init_standard(X.shape[1], config.hidden, output_dim, skip, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    for epoch in range(config.epochs):
        for bi, idx in enumerate(_batches(len(X), config.batch_size, rng)):
            loss, grads = backward(net, X[idx], ys[idx], task)
            net = apply_full_step(net, grads, config.learning_rate)
            report.log(epoch=epoch, batch=bi, loss=loss)
    report.wall_clock = time.perf_counter() - t0
    if X_val is not None and len(X_val) > 0:
        report.final = dict(val_score=score(net, X_val, y_val, task, config.validation_metric))
    return TrainResult(net, report)
