"""Post-hoc evaluation of trained networks.

Counterexample search encodes the ReLU network exactly in SMT-LIB (one real
per hidden unit, tied to its pre-activation by an if-then-else) and asks for
an input near a data point where the premise holds but the conclusion fails.
Every witness is replayed in floating point before it is counted. Balls where
interval bounds already decide the constraint skip the solver.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import constraints as c
from .intervals import BoundsBox, latent_box
from .network import Activation, Network, TaskKind
from .smt.check import model_to_theta
from .smt.emit import Script, app, linear, num
from .smt.formula import constraint_smt
from .smt.solver import Sat, Solver, Unsat

log = logging.getLogger(__name__)

RETRY_MARGIN = 1e-9


class MetricsError(ValueError):
    pass


@dataclass
class VerifyConfig:
    delta: float = 0.1
    timeout_ms: int = 60_000

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def _pre_activation_bounds(layer, lo, hi):
    """Interval bounds of ``x @ W + b`` over [lo, hi], padded against rounding."""
    W = layer.weights
    zl = layer.bias + np.where(W >= 0, W * lo[:, None], W * hi[:, None]).sum(axis=0)
    zh = layer.bias + np.where(W >= 0, W * hi[:, None], W * lo[:, None]).sum(axis=0)
    pad = 1e-9 * (1.0 + np.abs(zl) + np.abs(zh))
    return zl - pad, zh + pad


def encode_network(
    net: Network, script: Script, xs: Sequence[str], prefix: str = "h", box: tuple | None = None
) -> list[str]:
    """Assert the exact network semantics over input symbols ``xs``; returns output terms.

    With ``box`` = (lo, hi) bounding the inputs, units whose pre-activation
    sign is fixed on the box are encoded linearly (or as 0) and the others get
    bound hints. The encoding stays exact for inputs inside the box.
    """
    h = list(xs)
    lo = hi = None
    if box is not None:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    for n, layer in enumerate(net.layers):
        if layer.activation not in (Activation.RELU, Activation.IDENTITY):
            raise ValueError(f"cannot encode activation {layer.activation}")
        last = n == net.k - 1
        if lo is not None and not last:
            zl, zh = _pre_activation_bounds(layer, lo, hi)
        nxt = []
        for i in range(layer.fan_out):
            z = linear(layer.weights[:, i], float(layer.bias[i]), h)
            if last:
                nxt.append(z)
                continue
            if layer.activation is Activation.RELU and lo is not None and zh[i] <= 0:
                nxt.append("0.0")
                continue
            v = script.declare(f"{prefix}_{n}_{i}")
            if layer.activation is Activation.IDENTITY or (lo is not None and zl[i] >= 0):
                script.add(app("=", v, z))
            else:
                script.add(app("=", v, f"(ite (>= {z} 0.0) {z} 0.0)"))
                if lo is not None:
                    script.add(app("<=", v, num(zh[i])))
            nxt.append(v)
        if lo is not None and not last:
            if layer.activation is Activation.RELU:
                zl, zh = np.maximum(zl, 0.0), np.maximum(zh, 0.0)
            lo, hi = zl, zh
        if n == net.k - 2:
            nxt += [xs[j] for j in net.skip_features]
            if lo is not None:
                lo = np.concatenate([lo, np.asarray(box[0], dtype=np.float64)[list(net.skip_features)]])
                hi = np.concatenate([hi, np.asarray(box[1], dtype=np.float64)[list(net.skip_features)]])
        h = nxt
    return h


@dataclass
class Counterexample:
    status: str  # "witness", "none" or "unknown"
    witness: np.ndarray | None = None
    note: str = ""


def _ball(K: c.DomainConstraint, x0: np.ndarray, delta: float):
    lo, hi = x0 - delta, x0 + delta
    if K.input_box is not None:
        lo = np.maximum(lo, K.input_box.lo)
        hi = np.minimum(hi, K.input_box.hi)
    return lo, hi


# interval pre-check ---------------------------------------------------------
#
# Terms are bounded as affine forms over z = [latent; inputs] plus an interval
# remainder, so differences such as out_0 - out_1 keep their shared latent
# terms. Formulas get three values: True (holds everywhere on the ball),
# False (fails everywhere) or None (undecided).


class _Affine:
    __slots__ = ("vec", "const", "rlo", "rhi")

    def __init__(self, vec, const=0.0, rlo=0.0, rhi=0.0):
        self.vec, self.const, self.rlo, self.rhi = vec, const, rlo, rhi

    def __add__(self, o):
        return _Affine(self.vec + o.vec, self.const + o.const, self.rlo + o.rlo, self.rhi + o.rhi)

    def scale(self, a):
        lo, hi = (a * self.rlo, a * self.rhi) if a >= 0 else (a * self.rhi, a * self.rlo)
        return _Affine(a * self.vec, a * self.const, lo, hi)

    def bounds(self, zlo, zhi):
        v = self.vec
        lo = self.const + self.rlo + float(np.where(v >= 0, v * zlo, v * zhi).sum())
        hi = self.const + self.rhi + float(np.where(v >= 0, v * zhi, v * zlo).sum())
        pad = 1e-9 * (1.0 + abs(lo) + abs(hi))
        return lo - pad, hi + pad


class _BallBounds:
    def __init__(self, net: Network, lo: np.ndarray, hi: np.ndarray):
        latent = latent_box(net, BoundsBox(lo, hi))
        self.zlo = np.concatenate([latent.lo, lo])
        self.zhi = np.concatenate([latent.hi, hi])
        self.n_latent = len(latent)
        self.out = net.layers[-1]
        # a skip feature shares its latent slot, so its coefficients merge
        self.slot = [self.n_latent + j for j in range(len(lo))]
        first_skip = self.n_latent - len(net.skip_features)
        for pos, j in enumerate(net.skip_features):
            self.slot[j] = first_skip + pos

    def term(self, t) -> _Affine:
        n = len(self.zlo)
        if isinstance(t, c.Constant):
            return _Affine(np.zeros(n), float(t.value))
        if isinstance(t, c.InputFeature):
            v = np.zeros(n)
            v[self.slot[t.index]] = 1.0
            return _Affine(v)
        if isinstance(t, c.OutputComponent):
            v = np.zeros(n)
            v[: self.n_latent] = self.out.weights[:, t.index]
            return _Affine(v, float(self.out.bias[t.index]))
        if isinstance(t, c.Sum):
            acc = _Affine(np.zeros(n))
            for s in t.terms:
                acc = acc + self.term(s)
            return acc
        if isinstance(t, c.Scale):
            return self.term(t.term).scale(float(t.coef))
        if isinstance(t, c.IfPositiveThen):
            glo, ghi = self.term(c.OutputComponent(t.output)).bounds(self.zlo, self.zhi)
            if glo > 0:
                return self.term(t.then)
            if ghi <= 0:
                return self.term(t.otherwise)
            a = self.term(t.then).bounds(self.zlo, self.zhi)
            b = self.term(t.otherwise).bounds(self.zlo, self.zhi)
            return _Affine(np.zeros(n), 0.0, min(a[0], b[0]), max(a[1], b[1]))
        raise TypeError(f"unknown term {t!r}")

    def formula(self, f):
        if isinstance(f, c.Truth):
            return f.value
        if isinstance(f, c.Compare):
            lo, hi = (self.term(f.lhs) + self.term(f.rhs).scale(-1.0)).bounds(self.zlo, self.zhi)
            sure, never = {
                "<": (hi < 0, lo >= 0),
                "<=": (hi <= 0, lo > 0),
                ">": (lo > 0, hi <= 0),
                ">=": (lo >= 0, hi < 0),
                "=": (lo == hi == 0, lo > 0 or hi < 0),
            }[f.op]
            return True if sure else (False if never else None)
        if isinstance(f, c.And):
            vals = [self.formula(g) for g in f.items]
            return False if False in vals else (True if all(v is True for v in vals) else None)
        if isinstance(f, c.Or):
            vals = [self.formula(g) for g in f.items]
            return True if True in vals else (False if all(v is False for v in vals) else None)
        if isinstance(f, c.Not):
            v = self.formula(f.item)
            return None if v is None else not v
        if isinstance(f, c.Implies):
            return self.formula(c.Or((c.Not(f.premise), f.conclusion)))
        if isinstance(f, c.ExactlyK):
            vals = [self.formula(g) for g in f.items]
            sure = sum(v is True for v in vals)
            maybe = sum(v is not False for v in vals)
            if sure > f.k or maybe < f.k:
                return False
            return True if sure == maybe == f.k else None
        raise TypeError(f"unknown formula {f!r}")


def find_counterexample(net: Network, K: c.DomainConstraint, x0, delta: float, solver: Solver) -> Counterexample:
    """Search the box-clipped l-infinity ball around ``x0`` for an input violating ``K``."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (net.input_dim,):
        raise ValueError("instance width does not match the network")
    lo, hi = _ball(K, x0, delta)
    if np.any(lo > hi):
        return Counterexample("none", note="ball does not meet the input box")
    bb = _BallBounds(net, lo, hi)
    if bb.formula(K.premise) is False or bb.formula(K.conclusion) is True:
        return Counterexample("none", note="decided by interval bounds")
    note = ""
    for margin in (0.0, RETRY_MARGIN):
        sc = Script()
        xs = [sc.declare(f"x_{j}") for j in range(net.input_dim)]
        for j, x in enumerate(xs):
            sc.add(app("<=", num(lo[j]), x))
            sc.add(app("<=", x, num(hi[j])))
        outs = encode_network(net, sc, xs, box=(lo, hi))
        sc.add(constraint_smt(K, lambda i: xs[i], lambda i: outs[i], margin, positive=False))
        res = solver.check(sc, xs)
        if isinstance(res, Unsat):
            return Counterexample("none")
        if not isinstance(res, Sat):
            return Counterexample("unknown", note=res.reason)
        w = model_to_theta(res.model, xs)
        w = np.clip(w, lo, hi)
        if not c.evaluate_constraint(K, w, net.predict(w)):
            return Counterexample("witness", w)
        note = "solver witness not confirmed in floating point"
        log.info("%s; retrying with margin %g", note, RETRY_MARGIN)
    return Counterexample("unknown", note=note)


def constraint_accuracy(net: Network, X, K: c.DomainConstraint) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        raise MetricsError("no instances to evaluate")
    return 100.0 * float(np.mean(c.satisfied(K, X, net.predict(X))))


@dataclass
class AdversityResult:
    adi: float
    witnesses: int
    decided: int
    unknown: int
    verdicts: list = field(default_factory=list)


def adversity_index(net: Network, X, K: c.DomainConstraint, delta: float, solver: Solver) -> AdversityResult:
    """Fraction of instances with a confirmed counterexample nearby; undecided ones are left out."""
    verdicts = [find_counterexample(net, K, x, delta, solver) for x in np.atleast_2d(X)]
    wit = sum(v.status == "witness" for v in verdicts)
    unk = sum(v.status == "unknown" for v in verdicts)
    dec = len(verdicts) - unk
    if unk:
        log.warning("%d instance(s) undecided; excluded from the adversity index", unk)
    return AdversityResult(wit / dec if dec else 0.0, wit, dec, unk, [v.status for v in verdicts])


# predictive metrics --------------------------------------------------------


def truth_outputs(y, task: TaskKind | str, n_outputs: int) -> np.ndarray:
    """Output vectors that the true labels stand for, used to test labels against K."""
    task = TaskKind(task)
    y = np.asarray(y)
    if task is TaskKind.REGRESSION:
        return y.astype(np.float64).reshape(len(y), -1)
    if task is TaskKind.MULTILABEL or (task is TaskKind.BINARY and n_outputs == 1):
        return np.where(y.reshape(len(y), -1) > 0, 1.0, -1.0)
    out = -np.ones((len(y), n_outputs))
    out[np.arange(len(y)), y.reshape(-1).astype(int)] = 1.0
    return out


def jaccard(pred, true) -> float:
    """Mean per-row intersection over union of positive sets (two empty sets count as 1)."""
    p = np.asarray(pred) > 0
    t = np.asarray(true) > 0
    inter = (p & t).sum(axis=1)
    union = (p | t).sum(axis=1)
    return float(np.mean(np.where(union == 0, 1.0, inter / np.maximum(union, 1))))


def predictive_metrics(net: Network, X, y, task: TaskKind | str, K: c.DomainConstraint | None = None) -> dict:
    """Accuracy-type metrics on instances whose own labels respect ``K``."""
    task = TaskKind(task)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    keep = np.ones(len(X), dtype=bool)
    if K is not None and len(X):
        keep = c.satisfied(K, X, truth_outputs(y, task, net.output_dim))
    if not keep.any():
        raise MetricsError("no instances left after excluding constraint-violating labels")
    X, y = X[keep], y[keep]
    out = net.predict(X)
    res = dict(n=int(keep.sum()), excluded=int((~keep).sum()))
    if task is TaskKind.REGRESSION:
        res["mse"] = float(np.mean((out - y.astype(np.float64).reshape(out.shape)) ** 2))
        return res
    if task is TaskKind.MULTILABEL:
        p = (out > 0).astype(int)
        t = (y.reshape(p.shape) > 0).astype(int)
        res["coherent"] = 100.0 * float(np.mean(np.all(p == t, axis=1)))
        res["flattened"] = 100.0 * float(np.mean(p == t))
        res["jaccard"] = 100.0 * jaccard(p, t)
        return res
    if out.shape[1] == 1:
        pred = (out[:, 0] > 0).astype(int)
    else:
        pred = out.argmax(axis=1)
    res["accuracy"] = 100.0 * float(np.mean(pred == y.reshape(-1).astype(int)))
    return res


@dataclass
class MetricsReport:
    constraint_accuracy: float
    adi: float | None = None
    predictive: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    unknown: int = 0
    outside_box: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(
    net: Network,
    X,
    y,
    task: TaskKind | str,
    K: c.DomainConstraint,
    solver: Solver | None = None,
    delta: float | None = None,
) -> MetricsReport:
    """Constraint accuracy, predictive metrics, and the adversity index when a solver is given."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rep = MetricsReport(constraint_accuracy(net, X, K))
    try:
        rep.predictive = predictive_metrics(net, X, y, task, K)
    except MetricsError as e:
        rep.predictive = {"error": str(e)}
    if K.input_box is not None:
        rep.outside_box = int((~K.input_box.contains(X)).sum())
        if rep.outside_box:
            log.info("%d instance(s) outside the input box; the guarantee does not cover them", rep.outside_box)
    if solver is not None and delta is not None:
        adv = adversity_index(net, X, K, delta, solver)
        rep.adi, rep.verdicts, rep.unknown = adv.adi, adv.verdicts, adv.unknown
    return rep
