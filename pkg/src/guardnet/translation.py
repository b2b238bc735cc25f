"""Last-layer form of a domain constraint, and per-batch soft constraints.

With the hidden layers frozen, the network output is ``W^T x' + b`` where the
latent input ``x'`` ranges over the propagated latent box and the last-layer
parameters ``theta = (W, b)`` are the unknowns. Every comparison of the
constraint then has the form ``sum_j c_j(theta) x'_j + d(theta)  op  0`` with
``c_j`` and ``d`` linear in ``theta``.

Quantifier elimination
----------------------
For a single comparison the universal quantifier over a box is exact and
cheap: the worst case of ``c_j x'_j`` sits at ``lo_j`` when ``c_j >= 0`` and at
``hi_j`` otherwise. The premise (which mentions skip features only) is split
into sub-boxes when its atoms are single-feature bounds. Boolean structure
above the comparisons is handled three-valued: a sub-formula is *definitely
true* on a box when it is true at every point, *definitely false* when it is
false at every point. Requiring the conclusion to be definitely true is exact
for conjunctions of comparisons and sound (sufficient) for disjunctions,
exactly-k and sign-guarded sums.

The same three-valued semantics is evaluated numerically for a concrete
``theta`` and emitted as quantifier-free SMT over symbolic ``theta``, so the
line search and the solver agree on what "satisfies the last-layer constraint" means.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import constraints as c
from .intervals import BoundsBox, latent_box as _latent_box
from .network import Network, TaskKind
from .smt.emit import LinearAtom, Script, add, app, conj, count_true, disj, ite, linear, neg, num
from .smt.formula import formula_smt

log = logging.getLogger(__name__)


class TranslationError(c.ConstraintError):
    pass


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for the last layer's latent inputs and parameters."""

    hidden: int
    skip: tuple
    outputs: int

    @classmethod
    def of(cls, net: Network) -> "Layout":
        return cls(net.hidden_width, tuple(net.skip_features), net.output_dim)

    @property
    def latent(self) -> int:
        return self.hidden + len(self.skip)

    @property
    def n_params(self) -> int:
        return self.latent * self.outputs + self.outputs

    def w(self, j: int, i: int) -> int:
        return j * self.outputs + i

    def b(self, i: int) -> int:
        return self.latent * self.outputs + i

    def slot(self, feature: int) -> int:
        return self.hidden + self.skip.index(feature)

    @property
    def symbols(self) -> list[str]:
        L, O = self.latent, self.outputs
        return [f"w_{j}_{i}" for j in range(L) for i in range(O)] + [f"b_{i}" for i in range(O)]

    def output_coeffs(self, x: np.ndarray, i: int) -> np.ndarray:
        """Parameter coefficients of output ``i`` at the numeric latent point ``x``."""
        v = np.zeros(self.n_params)
        v[[self.w(j, i) for j in range(self.latent)]] = x
        v[self.b(i)] = 1.0
        return v


# affine forms in x' with theta-linear coefficients ------------------------


class XAffine:
    """``sum_j (coef[j] . [theta, 1]) x'_j + const . [theta, 1]``."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: np.ndarray, const: np.ndarray):
        self.coef = coef
        self.const = const

    @classmethod
    def zero(cls, lay: Layout) -> "XAffine":
        P1 = lay.n_params + 1
        return cls(np.zeros((lay.latent, P1)), np.zeros(P1))

    def __add__(self, other: "XAffine") -> "XAffine":
        return XAffine(self.coef + other.coef, self.const + other.const)

    def scale(self, k: float) -> "XAffine":
        return XAffine(self.coef * k, self.const * k)

    def is_param_free(self) -> bool:
        return not (np.any(self.coef[:, :-1]) or np.any(self.const[:-1]))

    def bounds(self, theta1: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
        cj = self.coef @ theta1
        d = float(self.const @ theta1)
        a, b = cj * lo, cj * hi
        return d + float(np.minimum(a, b).sum()), d + float(np.maximum(a, b).sum())

    def key(self) -> bytes:
        return self.coef.tobytes() + self.const.tobytes()


@dataclass(frozen=True)
class LinTerm:
    """Affine part plus sign-guarded pieces ``coef * ite(guard, then, else)``."""

    aff: XAffine
    ites: tuple = ()

    def __add__(self, o: "LinTerm") -> "LinTerm":
        return LinTerm(self.aff + o.aff, self.ites + o.ites)

    def scale(self, k: float) -> "LinTerm":
        return LinTerm(self.aff.scale(k), tuple((k * w, t) for w, t in self.ites))


@dataclass(frozen=True)
class LIte:
    guard: "LAtom"
    then: LinTerm
    otherwise: LinTerm


# lowered formula nodes
@dataclass(frozen=True, eq=False)
class LAtom:
    expr: XAffine
    op: str


@dataclass(frozen=True, eq=False)
class LCmp:
    term: LinTerm
    op: str


@dataclass(frozen=True, eq=False)
class LAnd:
    items: tuple


@dataclass(frozen=True, eq=False)
class LOr:
    items: tuple


@dataclass(frozen=True, eq=False)
class LNot:
    item: object


@dataclass(frozen=True, eq=False)
class LExactly:
    items: tuple
    k: int


@dataclass(frozen=True, eq=False)
class LConst:
    value: bool


def _lower_term(t, lay: Layout) -> LinTerm:
    z = XAffine.zero(lay)
    P = lay.n_params
    if isinstance(t, c.Constant):
        z.const[P] = float(t.value)
        return LinTerm(z)
    if isinstance(t, c.InputFeature):
        z.coef[lay.slot(t.index), P] = 1.0
        return LinTerm(z)
    if isinstance(t, c.OutputComponent):
        i = t.index
        for j in range(lay.latent):
            z.coef[j, lay.w(j, i)] = 1.0
        z.const[lay.b(i)] = 1.0
        return LinTerm(z)
    if isinstance(t, c.Sum):
        out = LinTerm(z)
        for s in t.terms:
            out = out + _lower_term(s, lay)
        return out
    if isinstance(t, c.Scale):
        return _lower_term(t.term, lay).scale(float(t.coef))
    if isinstance(t, c.IfPositiveThen):
        guard = LAtom(_lower_term(c.OutputComponent(t.output), lay).aff, ">")
        node = LIte(guard, _lower_term(t.then, lay), _lower_term(t.otherwise, lay))
        return LinTerm(z, ((1.0, node),))
    raise TypeError(f"not a term: {t!r}")


def _lower(f, lay: Layout):
    if isinstance(f, c.Truth):
        return LConst(f.value)
    if isinstance(f, c.Compare):
        d = _lower_term(f.lhs, lay) + _lower_term(f.rhs, lay).scale(-1.0)
        if not d.ites:
            return LAtom(d.aff, f.op)
        return LCmp(d, f.op)
    if isinstance(f, c.And):
        return LAnd(tuple(_lower(g, lay) for g in f.items))
    if isinstance(f, c.Or):
        return LOr(tuple(_lower(g, lay) for g in f.items))
    if isinstance(f, c.Not):
        return LNot(_lower(f.item, lay))
    if isinstance(f, c.Implies):
        return LOr((LNot(_lower(f.premise, lay)), _lower(f.conclusion, lay)))
    if isinstance(f, c.ExactlyK):
        return LExactly(tuple(_lower(g, lay) for g in f.items), f.k)
    raise TypeError(f"not a formula: {f!r}")


def _is_conjunction_of_atoms(n) -> bool:
    if isinstance(n, LAtom) or isinstance(n, LConst):
        return True
    if isinstance(n, LAnd):
        return all(_is_conjunction_of_atoms(i) for i in n.items)
    return False


# premise -> sub-boxes -------------------------------------------------------

_NEG_OP = {"<": ">=", "<=": ">", ">=": "<", ">": "<="}
_MAX_DISJUNCTS = 256


class _Opaque(Exception):
    pass


def _premise_dnf(f, lay: Layout, positive=True) -> list[list]:
    """Disjunctive normal form whose literals are ``(a, d, op)`` meaning ``a.x' + d op 0``."""
    if isinstance(f, c.Truth):
        return [[]] if f.value == positive else []
    if isinstance(f, c.Not):
        return _premise_dnf(f.item, lay, not positive)
    if isinstance(f, c.Implies):
        return _premise_dnf(c.Or((c.Not(f.premise), f.conclusion)), lay, positive)
    if isinstance(f, c.Compare):
        d = _lower_term(f.lhs, lay) + _lower_term(f.rhs, lay).scale(-1.0)
        if d.ites or not d.aff.is_param_free():
            raise _Opaque
        a, d0 = d.aff.coef[:, -1].copy(), float(d.aff.const[-1])
        if positive:
            return [[(a, d0, f.op)]]
        if f.op == "=":
            return [[(a, d0, "<")], [(a, d0, ">")]]
        return [[(a, d0, _NEG_OP[f.op])]]
    if isinstance(f, (c.And, c.Or)):
        parts = [_premise_dnf(g, lay, positive) for g in f.items]
        if isinstance(f, c.And) == positive:
            out = [[]]
            for p in parts:
                out = [x + y for x in out for y in p]
                if len(out) > _MAX_DISJUNCTS:
                    raise _Opaque
            return out
        out = [x for p in parts for x in p]
        if len(out) > _MAX_DISJUNCTS:
            raise _Opaque
        return out
    raise _Opaque


def _apply_literal(lo, hi, lit) -> tuple[bool, object]:
    """Shrink the box by a single-variable literal; returns (nonempty, residual)."""
    a, d, op = lit
    nz = np.flatnonzero(a)
    if nz.size == 0:
        ok = {"<": d < 0, "<=": d <= 0, "=": d == 0, ">=": d >= 0, ">": d > 0}[op]
        return ok, None
    if nz.size > 1:
        return True, lit
    j = int(nz[0])
    aj = float(a[j])
    v = -d / aj
    if aj < 0:
        op = {"<": ">", "<=": ">=", "=": "=", ">=": "<=", ">": "<"}[op]
    if op in ("<", "<="):
        if op == "<" and v <= lo[j]:
            return False, None
        hi[j] = min(hi[j], v)
    elif op in (">", ">="):
        if op == ">" and v >= hi[j]:
            return False, None
        lo[j] = max(lo[j], v)
    else:
        lo[j], hi[j] = max(lo[j], v), min(hi[j], v)
    return bool(lo[j] <= hi[j]), None


@dataclass(eq=False)
class Region:
    lo: np.ndarray
    hi: np.ndarray
    formula: object  # lowered node that must be definitely true on the box


# three-valued numeric evaluation -------------------------------------------


class _NumEval:
    def __init__(self, theta1, lo, hi, margin):
        self.theta1, self.lo, self.hi, self.m = theta1, lo, hi, margin
        self.cache = {}

    def aff(self, e: XAffine):
        k = id(e)
        if k not in self.cache:
            self.cache[k] = e.bounds(self.theta1, self.lo, self.hi)
        return self.cache[k]

    def term(self, t: LinTerm):
        lo, hi = self.aff(t.aff)
        for w, node in t.ites:
            a, b = self.ite(node)
            lo, hi = lo + min(w * a, w * b), hi + max(w * a, w * b)
        return lo, hi

    def ite(self, n: LIte):
        dt, df = self.node(n.guard)
        if dt:
            return self.term(n.then)
        if df:
            return self.term(n.otherwise)
        a, b = self.term(n.then)
        p, q = self.term(n.otherwise)
        return min(a, p), max(b, q)

    def cmp(self, lo, hi, op):
        m = self.m
        if op == ">=":
            return lo >= m, hi < -m
        if op == ">":
            return lo > m, hi <= -m
        if op == "<=":
            return hi <= -m, lo > m
        if op == "<":
            return hi < -m, lo >= m
        return lo >= 0 and hi <= 0, lo > 0 or hi < 0

    def node(self, n) -> tuple[bool, bool]:
        if isinstance(n, LConst):
            return n.value, not n.value
        if isinstance(n, LAtom):
            return self.cmp(*self.aff(n.expr), n.op)
        if isinstance(n, LCmp):
            return self.cmp(*self.term(n.term), n.op)
        if isinstance(n, LNot):
            dt, df = self.node(n.item)
            return df, dt
        if isinstance(n, LAnd):
            vals = [self.node(i) for i in n.items]
            return all(v[0] for v in vals), any(v[1] for v in vals)
        if isinstance(n, LOr):
            vals = [self.node(i) for i in n.items]
            return any(v[0] for v in vals), all(v[1] for v in vals)
        if isinstance(n, LExactly):
            vals = [self.node(i) for i in n.items]
            t = sum(v[0] for v in vals)
            possible = sum(not v[1] for v in vals)
            return t == n.k and possible == n.k, t > n.k or possible < n.k
        raise TypeError(n)


# three-valued SMT emission ---------------------------------------------------


class _SmtEval:
    """Emits definitely-true / definitely-false conditions over symbolic theta."""

    def __init__(self, script: Script, symbols, lo, hi, margin, prefix):
        self.sc, self.sym, self.lo, self.hi, self.m = script, symbols, lo, hi, margin
        self.prefix = prefix
        self.cache = {}
        self.count = 0

    def _lin(self, row: np.ndarray) -> str:
        return linear(row[:-1], float(row[-1]), self.sym)

    def aff(self, e: XAffine) -> tuple[str, str]:
        k = id(e)
        if k in self.cache:
            return self.cache[k]
        lo_parts, hi_parts = [self._lin(e.const)], [self._lin(e.const)]
        for j in range(e.coef.shape[0]):
            row = e.coef[j]
            if not np.any(row):
                continue
            l, h = float(self.lo[j]), float(self.hi[j])
            if not np.any(row[:-1]):
                cj = float(row[-1])
                lo_parts.append(num(min(cj * l, cj * h)))
                hi_parts.append(num(max(cj * l, cj * h)))
                continue
            cexp = self._lin(row)
            at_l = "0.0" if l == 0 else app("*", num(l), cexp)
            at_h = "0.0" if h == 0 else app("*", num(h), cexp)
            if l == h:
                lo_parts.append(at_l)
                hi_parts.append(at_l)
                continue
            pos = app(">=", cexp, "0.0")
            lo_parts.append(ite(pos, at_l, at_h))
            hi_parts.append(ite(pos, at_h, at_l))
        n = self.count
        self.count += 1
        lo_name = self.sc.define(f"{self.prefix}_{n}_lo", "Real", add(lo_parts))
        hi_name = self.sc.define(f"{self.prefix}_{n}_hi", "Real", add(hi_parts))
        self.cache[k] = (lo_name, hi_name)
        return lo_name, hi_name

    def term(self, t: LinTerm) -> tuple[str, str]:
        lo, hi = self.aff(t.aff)
        los, his = [lo], [hi]
        for w, node in t.ites:
            a, b = self.ite(node)
            wa, wb = app("*", num(w), a), app("*", num(w), b)
            if w >= 0:
                los.append(wa)
                his.append(wb)
            else:
                los.append(wb)
                his.append(wa)
        return add(los), add(his)

    def ite(self, n: LIte) -> tuple[str, str]:
        dt, df = self.node(n.guard)
        a, b = self.term(n.then)
        p, q = self.term(n.otherwise)
        lo = ite(dt, a, ite(df, p, ite(app("<=", a, p), a, p)))
        hi = ite(dt, b, ite(df, q, ite(app(">=", b, q), b, q)))
        return lo, hi

    def cmp(self, lo: str, hi: str, op: str) -> tuple[str, str]:
        m, mn = num(self.m), num(-self.m)
        if op == ">=":
            return app(">=", lo, m), app("<", hi, mn)
        if op == ">":
            return app(">", lo, m), app("<=", hi, mn)
        if op == "<=":
            return app("<=", hi, mn), app(">", lo, m)
        if op == "<":
            return app("<", hi, mn), app(">=", lo, m)
        return (
            conj([app(">=", lo, "0.0"), app("<=", hi, "0.0")]),
            disj([app(">", lo, "0.0"), app("<", hi, "0.0")]),
        )

    def node(self, n) -> tuple[str, str]:
        if isinstance(n, LConst):
            return ("true", "false") if n.value else ("false", "true")
        if isinstance(n, LAtom):
            return self.cmp(*self.aff(n.expr), n.op)
        if isinstance(n, LCmp):
            return self.cmp(*self.term(n.term), n.op)
        if isinstance(n, LNot):
            dt, df = self.node(n.item)
            return df, dt
        if isinstance(n, LAnd):
            vals = [self.node(i) for i in n.items]
            return conj([v[0] for v in vals]), disj([v[1] for v in vals])
        if isinstance(n, LOr):
            vals = [self.node(i) for i in n.items]
            return disj([v[0] for v in vals]), conj([v[1] for v in vals])
        if isinstance(n, LExactly):
            vals = [self.node(i) for i in n.items]
            k = str(int(n.k))
            t = count_true([v[0] for v in vals])
            possible = count_true([neg(v[1]) for v in vals])
            return (
                conj([app("=", t, k), app("=", possible, k)]),
                disj([app(">", t, k), app("<", possible, k)]),
            )
        raise TypeError(n)


# the translated constraint ---------------------------------------------------


@dataclass(eq=False)
class TranslatedConstraint:
    """Last-layer constraint for one frozen set of hidden layers."""

    K: c.DomainConstraint
    layout: Layout
    latent_box: BoundsBox
    regions: list[Region]
    exact: bool
    has_residual: bool = False
    _symbols: list = field(default_factory=list, repr=False)

    @property
    def symbols(self) -> list[str]:
        if not self._symbols:
            self._symbols = self.layout.symbols
        return self._symbols

    def float_slack(self) -> float:
        """Margin that keeps accepted weights valid under floating-point forward passes."""
        span = float(np.abs(np.concatenate([self.latent_box.lo, self.latent_box.hi])).sum())
        return 1e-9 * (1.0 + span)

    def holds_definitely(self, theta, margin: float = 0.0) -> bool:
        """Numeric three-valued check: True means the last-layer constraint holds for ``theta``."""
        theta1 = np.append(np.asarray(theta, dtype=np.float64), 1.0)
        for r in self.regions:
            if not _NumEval(theta1, r.lo, r.hi, margin).node(r.formula)[0]:
                return False
        return True

    def hard_smt(self, script: Script, margin: float = 0.0, prefix: str = "kp") -> str:
        """Quantifier-free sufficient condition for the last-layer constraint (exact for conjunctions)."""
        parts = []
        for n, r in enumerate(self.regions):
            ev = _SmtEval(script, self.symbols, r.lo, r.hi, margin, f"{prefix}{n}")
            parts.append(ev.node(r.formula)[0])
        return conj(parts)

    # literal quantified form -------------------------------------------------

    def _output_bilinear(self, i: int, xs: Sequence[str]) -> str:
        lay = self.layout
        terms = [app("*", f"w_{j}_{i}", xs[j]) for j in range(lay.latent)] + [f"b_{i}"]
        return app("+", *terms)

    def forall_smt(self, margin: float = 0.0) -> str:
        """``forall x' in latent box: P => C`` with symbolic last-layer parameters."""
        lay = self.layout
        xs = [f"xp_{j}" for j in range(lay.latent)]
        binders = " ".join(f"({x} Real)" for x in xs)
        in_box = conj(
            [app("<=", num(l), x) for l, x in zip(self.latent_box.lo, xs)]
            + [app("<=", x, num(h)) for h, x in zip(self.latent_box.hi, xs)]
        )
        body = formula_smt(
            c.Implies(self.K.premise, self.K.conclusion),
            lambda f: xs[lay.slot(f)],
            lambda i: self._output_bilinear(i, xs),
            margin,
        )
        return f"(forall ({binders}) (=> {in_box} {body}))"

    def violation_smt(self, theta, script: Script, margin: float = 0.0) -> str:
        """``exists x' in box: P and not C`` for numeric parameters (declares ``xp_j``)."""
        lay = self.layout
        W = np.asarray(theta[: lay.latent * lay.outputs]).reshape(lay.latent, lay.outputs)
        bvec = np.asarray(theta[lay.latent * lay.outputs :])
        xs = [script.declare(f"xp_{j}") for j in range(lay.latent)]
        def out(i):
            return linear(W[:, i], float(bvec[i]), xs)

        for j, x in enumerate(xs):
            script.add(app("<=", num(self.latent_box.lo[j]), x))
            script.add(app("<=", x, num(self.latent_box.hi[j])))
        return formula_smt(
            c.Implies(self.K.premise, self.K.conclusion), lambda f: xs[lay.slot(f)], out, margin, positive=False
        )

    def signature(self) -> str:
        """Canonical text; equal for structurally identical translations."""
        sc = Script()
        sc.declare_all(self.symbols)
        expr = self.hard_smt(sc)
        return sc.render(()) + expr


def validate_skip_features(K: c.DomainConstraint, net: Network) -> None:
    missing = sorted(set(K.features()) - set(net.skip_features))
    if missing:
        names = [K.feature_names[i] if i < len(K.feature_names) else str(i) for i in missing]
        raise TranslationError(
            f"constraint references input feature(s) {missing} ({', '.join(names)}) "
            "that are not skip-connected to the last layer"
        )
    if net.output_dim <= max(c.referenced_outputs(K.conclusion) | {-1}):
        raise TranslationError("constraint references an output the network does not have")


def _refine_region(net: Network, input_box: BoundsBox, lay: Layout, lo, hi, eps: float) -> None:
    """Tighten the hidden dimensions of a region by propagating its own input sub-box."""
    ilo, ihi = input_box.lo.copy(), input_box.hi.copy()
    for f in lay.skip:
        s = lay.slot(f)
        ilo[f], ihi[f] = max(ilo[f], lo[s]), min(ihi[f], hi[s])
    if np.array_equal(ilo, input_box.lo) and np.array_equal(ihi, input_box.hi):
        return
    if np.any(ilo > ihi):
        return
    sub = _latent_box(net, BoundsBox(ilo, ihi), eps)
    H = lay.hidden
    lo[:H] = np.maximum(lo[:H], sub.lo[:H])
    hi[:H] = np.minimum(hi[:H], sub.hi[:H])


def translate(
    K: c.DomainConstraint,
    net: Network,
    latent: BoundsBox | None = None,
    eps: float = 0.0,
    refine_regions: bool = True,
) -> TranslatedConstraint:
    """Build the last-layer constraint for the current hidden layers.

    With ``refine_regions`` each premise sub-box of the input space is
    propagated separately, which can only shrink the hidden bounds used for
    that region (requires the constraint's input box).
    """
    validate_skip_features(K, net)
    if latent is None:
        if K.input_box is None:
            raise TranslationError("constraint has no input box")
        latent = _latent_box(net, K.input_box, eps)
    lay = Layout.of(net)
    if len(latent) != lay.latent:
        raise TranslationError("latent box does not match the last layer's fan-in")
    conclusion = _lower(K.conclusion, lay)

    regions: list[Region] = []
    residual = False
    try:
        dnf = _premise_dnf(K.premise, lay)
    except _Opaque:
        dnf = None
    if dnf is None:
        residual = True
        node = LOr((LNot(_lower(K.premise, lay)), conclusion))
        regions.append(Region(latent.lo.copy(), latent.hi.copy(), node))
    else:
        for lits in dnf:
            lo, hi = latent.lo.copy(), latent.hi.copy()
            rest, ok = [], True
            for lit in lits:
                ok, res = _apply_literal(lo, hi, lit)
                if not ok:
                    break
                if res is not None:
                    rest.append(res)
            if not ok:
                continue
            if refine_regions and K.input_box is not None:
                _refine_region(net, K.input_box, lay, lo, hi, eps)
            node = conclusion
            if rest:
                residual = True
                atoms = []
                for a, d, op in rest:
                    e = XAffine.zero(lay)
                    e.coef[:, -1] = a
                    e.const[-1] = d
                    atoms.append(LAtom(e, op))
                node = LOr((LNot(LAnd(tuple(atoms))), conclusion))
            regions.append(Region(lo, hi, node))
    exact = not residual and _is_conjunction_of_atoms(conclusion)
    return TranslatedConstraint(K, lay, latent, regions, exact, residual)


# soft constraints ------------------------------------------------------------


@dataclass
class SoftConstraint:
    name: str
    atoms: tuple  # conjunction of LinearAtom

    def holds(self, theta) -> bool:
        return all(a.holds(theta) for a in self.atoms)

    def to_smt(self, symbols) -> str:
        return conj([a.to_smt(symbols) for a in self.atoms])


@dataclass
class SoftConstraintSet:
    items: list

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def count_satisfied(self, theta) -> int:
        return sum(s.holds(theta) for s in self.items)


def _sign_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 0, 1.0, -1.0)


def build_soft_constraints(
    latents: np.ndarray,
    labels,
    task: TaskKind | str,
    thresholds: Sequence[float],
    layout: Layout,
) -> SoftConstraintSet:
    """Fit-quality constraints, one per (instance, threshold[, output])."""
    task = TaskKind(task)
    X = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if X.shape[1] != layout.latent:
        raise ValueError("latent batch width does not match the last layer")
    if len(thresholds) == 0:
        raise ValueError("need at least one threshold")
    B, O = X.shape[0], layout.outputs
    items = []

    def push(atoms):
        items.append(SoftConstraint(f"s{len(items)}", tuple(atoms)))

    if task is TaskKind.REGRESSION:
        Y = np.asarray(labels, dtype=np.float64).reshape(B, -1)
        if Y.shape[1] != O:
            raise ValueError("label dimension does not match outputs")
        for n in range(B):
            for i in range(O):
                v = layout.output_coeffs(X[n], i)
                for e in thresholds:
                    push([LinearAtom(v, -(Y[n, i] - e), ">="), LinearAtom(v, -(Y[n, i] + e), "<=")])
        return SoftConstraintSet(items)

    if task is TaskKind.MULTILABEL or (task is TaskKind.BINARY and O == 1):
        S = _sign_labels(labels).reshape(B, -1)
        if S.shape[1] != O:
            raise ValueError("label dimension does not match outputs")
        for n in range(B):
            for i in range(O):
                v = layout.output_coeffs(X[n], i)
                for tau in thresholds:
                    push([LinearAtom(v, -tau, ">") if S[n, i] > 0 else LinearAtom(v, tau, "<")])
        return SoftConstraintSet(items)

    y = np.asarray(labels).reshape(-1).astype(int)
    if y.shape[0] != B or y.min() < 0 or y.max() >= O:
        raise ValueError("class labels do not match outputs")
    for n in range(B):
        vs = [layout.output_coeffs(X[n], i) for i in range(O)]
        for tau in thresholds:
            push([LinearAtom(vs[i], -tau, ">") if i == y[n] else LinearAtom(vs[i], tau, "<") for i in range(O)])
    return SoftConstraintSet(items)
