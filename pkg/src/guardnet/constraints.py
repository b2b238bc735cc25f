"""Domain constraints ``forall x in box: P(x) => C(x, f(x))``.

Terms and formulas form a small immutable AST. Input features and outputs
are referenced by index; the JSON format refers to them by name and is
resolved against a dataset schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .intervals import BoundsBox


class ConstraintError(ValueError):
    pass


# terms ---------------------------------------------------------------------


@dataclass(frozen=True)
class InputFeature:
    index: int


@dataclass(frozen=True)
class OutputComponent:
    index: int


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Sum:
    terms: tuple


@dataclass(frozen=True)
class Scale:
    coef: float
    term: "Term"


@dataclass(frozen=True)
class IfPositiveThen:
    """``then`` if output ``output`` is strictly positive, else ``otherwise``."""

    output: int
    then: "Term"
    otherwise: "Term"


Term = Union[InputFeature, OutputComponent, Constant, Sum, Scale, IfPositiveThen]

# formulas ------------------------------------------------------------------

OPS = ("<", "<=", "=", ">=", ">")


@dataclass(frozen=True)
class Compare:
    lhs: Term
    op: str
    rhs: Term

    def __post_init__(self):
        if self.op not in OPS:
            raise ConstraintError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: "Formula"


@dataclass(frozen=True)
class Implies:
    premise: "Formula"
    conclusion: "Formula"


@dataclass(frozen=True)
class ExactlyK:
    items: tuple
    k: int

    def __post_init__(self):
        if not 0 < self.k <= len(self.items):
            raise ConstraintError(f"exactly-{self.k} over {len(self.items)} items")


@dataclass(frozen=True)
class Truth:
    value: bool


Formula = Union[Compare, And, Or, Not, Implies, ExactlyK, Truth]
TRUE = Truth(True)


def conj(*items) -> Formula:
    return And(tuple(items))


def disj(*items) -> Formula:
    return Or(tuple(items))


def add(*terms) -> Sum:
    return Sum(tuple(terms))


@dataclass
class DomainConstraint:
    conclusion: Formula
    premise: Formula = TRUE
    input_box: BoundsBox | None = None
    feature_names: tuple = ()
    output_names: tuple = ()
    name: str = "K"

    def features(self) -> set[int]:
        return referenced_features(self.premise) | referenced_features(self.conclusion)

    def with_box(self, box: BoundsBox) -> "DomainConstraint":
        return DomainConstraint(
            self.conclusion, self.premise, box, self.feature_names, self.output_names, self.name
        )


# traversal -----------------------------------------------------------------


def children(node) -> tuple:
    if isinstance(node, (Sum,)):
        return node.terms
    if isinstance(node, Scale):
        return (node.term,)
    if isinstance(node, IfPositiveThen):
        return (OutputComponent(node.output), node.then, node.otherwise)
    if isinstance(node, Compare):
        return (node.lhs, node.rhs)
    if isinstance(node, (And, Or, ExactlyK)):
        return node.items
    if isinstance(node, Not):
        return (node.item,)
    if isinstance(node, Implies):
        return (node.premise, node.conclusion)
    return ()


def walk(node):
    yield node
    for c in children(node):
        yield from walk(c)


def referenced_features(node) -> set[int]:
    return {n.index for n in walk(node) if isinstance(n, InputFeature)}


def referenced_outputs(node) -> set[int]:
    return {n.index for n in walk(node) if isinstance(n, OutputComponent)}


def has_outputs(node) -> bool:
    return any(isinstance(n, (OutputComponent, IfPositiveThen)) for n in walk(node))


# evaluation ----------------------------------------------------------------


def eval_term(t: Term, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if isinstance(t, InputFeature):
        return X[:, t.index]
    if isinstance(t, OutputComponent):
        return Y[:, t.index]
    if isinstance(t, Constant):
        return np.full(X.shape[0], float(t.value))
    if isinstance(t, Sum):
        acc = np.zeros(X.shape[0])
        for s in t.terms:
            acc = acc + eval_term(s, X, Y)
        return acc
    if isinstance(t, Scale):
        return float(t.coef) * eval_term(t.term, X, Y)
    if isinstance(t, IfPositiveThen):
        return np.where(Y[:, t.output] > 0, eval_term(t.then, X, Y), eval_term(t.otherwise, X, Y))
    raise TypeError(f"not a term: {t!r}")


_CMP: dict[str, Callable] = {
    "<": np.less,
    "<=": np.less_equal,
    "=": np.equal,
    ">=": np.greater_equal,
    ">": np.greater,
}


def eval_formula(f: Formula, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Vectorised truth of ``f`` over rows of inputs ``X`` and outputs ``Y``."""
    if isinstance(f, Compare):
        return _CMP[f.op](eval_term(f.lhs, X, Y), eval_term(f.rhs, X, Y))
    if isinstance(f, Truth):
        return np.full(X.shape[0], f.value)
    if isinstance(f, And):
        acc = np.ones(X.shape[0], dtype=bool)
        for g in f.items:
            acc &= eval_formula(g, X, Y)
        return acc
    if isinstance(f, Or):
        acc = np.zeros(X.shape[0], dtype=bool)
        for g in f.items:
            acc |= eval_formula(g, X, Y)
        return acc
    if isinstance(f, Not):
        return ~eval_formula(f.item, X, Y)
    if isinstance(f, Implies):
        return ~eval_formula(f.premise, X, Y) | eval_formula(f.conclusion, X, Y)
    if isinstance(f, ExactlyK):
        count = sum(eval_formula(g, X, Y).astype(int) for g in f.items)
        return count == f.k
    raise TypeError(f"not a formula: {f!r}")


def satisfied(K: DomainConstraint, X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    return ~eval_formula(K.premise, X, Y) | eval_formula(K.conclusion, X, Y)


def evaluate_constraint(K: DomainConstraint, x, y_hat) -> bool:
    return bool(satisfied(K, x, y_hat)[0])


# rescaling -----------------------------------------------------------------


def scale_value(v, lo, span):
    """The min-max map used for data (``span > 0``); shared so equalities stay exact."""
    return (v - lo) / span


def rescale(
    K: DomainConstraint,
    feature_lo: Sequence[float],
    feature_span: Sequence[float],
    output_lo: Sequence[float] | None = None,
    output_span: Sequence[float] | None = None,
) -> DomainConstraint:
    """Rewrite a constraint stated in raw units into min-max scaled units."""

    def raw_feature(i):
        lo, span = float(feature_lo[i]), float(feature_span[i])
        if span <= 0:
            return Constant(lo)
        return add(Constant(lo), Scale(span, InputFeature(i)))

    def raw_output(i):
        if output_lo is None:
            return OutputComponent(i)
        return add(Constant(float(output_lo[i])), Scale(float(output_span[i]), OutputComponent(i)))

    def term(t):
        if isinstance(t, InputFeature):
            return raw_feature(t.index)
        if isinstance(t, OutputComponent):
            return raw_output(t.index)
        if isinstance(t, Constant):
            return t
        if isinstance(t, Sum):
            return Sum(tuple(term(s) for s in t.terms))
        if isinstance(t, Scale):
            return Scale(t.coef, term(t.term))
        if isinstance(t, IfPositiveThen):
            if output_lo is not None:
                raise ConstraintError("sign guards on rescaled regression outputs are not supported")
            return IfPositiveThen(t.output, term(t.then), term(t.otherwise))
        raise TypeError(t)

    def formula(f):
        if isinstance(f, Compare):
            a, b, op = f.lhs, f.rhs, f.op
            if isinstance(b, InputFeature) and isinstance(a, Constant):
                a, b, op = b, a, _flip(op)
            if isinstance(a, InputFeature) and isinstance(b, Constant):
                lo, span = float(feature_lo[a.index]), float(feature_span[a.index])
                if span > 0:
                    return Compare(a, op, Constant(float(scale_value(b.value, lo, span))))
            return Compare(term(f.lhs), f.op, term(f.rhs))
        if isinstance(f, Truth):
            return f
        if isinstance(f, And):
            return And(tuple(formula(g) for g in f.items))
        if isinstance(f, Or):
            return Or(tuple(formula(g) for g in f.items))
        if isinstance(f, Not):
            return Not(formula(f.item))
        if isinstance(f, Implies):
            return Implies(formula(f.premise), formula(f.conclusion))
        if isinstance(f, ExactlyK):
            return ExactlyK(tuple(formula(g) for g in f.items), f.k)
        raise TypeError(f)

    return DomainConstraint(
        formula(K.conclusion), formula(K.premise), K.input_box, K.feature_names, K.output_names, K.name
    )


def _flip(op: str) -> str:
    return {"<": ">", "<=": ">=", "=": "=", ">=": "<=", ">": "<"}[op]


# JSON ----------------------------------------------------------------------


def _number(v) -> float:
    if isinstance(v, bool):
        raise ConstraintError("boolean where a number was expected")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        return float(Decimal(v))
    raise ConstraintError(f"not a number: {v!r}")


def _index(name, names: Sequence[str], what: str) -> int:
    if isinstance(name, int):
        if not 0 <= name < len(names):
            raise ConstraintError(f"{what} index {name} out of range")
        return name
    try:
        return list(names).index(name)
    except ValueError:
        raise ConstraintError(f"unknown {what} {name!r}") from None


def term_from_json(d, features, outputs) -> Term:
    if isinstance(d, (int, float, str)) and not isinstance(d, bool):
        return Constant(_number(d))
    if not isinstance(d, dict) or len(d) == 0:
        raise ConstraintError(f"malformed term {d!r}")
    if "feature" in d:
        return InputFeature(_index(d["feature"], features, "feature"))
    if "output" in d:
        return OutputComponent(_index(d["output"], outputs, "output"))
    if "const" in d:
        return Constant(_number(d["const"]))
    if "sum" in d:
        return Sum(tuple(term_from_json(t, features, outputs) for t in d["sum"]))
    if "scale" in d:
        return Scale(_number(d["scale"]), term_from_json(d["term"], features, outputs))
    if "if_positive" in d:
        return IfPositiveThen(
            _index(d["if_positive"], outputs, "output"),
            term_from_json(d["then"], features, outputs),
            term_from_json(d.get("else", 0), features, outputs),
        )
    raise ConstraintError(f"unknown term keys {sorted(d)}")


def formula_from_json(d, features, outputs) -> Formula:
    if isinstance(d, bool):
        return Truth(d)
    if not isinstance(d, dict):
        raise ConstraintError(f"malformed formula {d!r}")
    if "exists" in d or "forall" in d:
        raise ConstraintError("nested quantifiers are not supported; constraints are implicitly universal")
    f = lambda g: formula_from_json(g, features, outputs)  # noqa: E731
    if "cmp" in d:
        return Compare(
            term_from_json(d["lhs"], features, outputs), d["cmp"], term_from_json(d["rhs"], features, outputs)
        )
    if "and" in d:
        return And(tuple(f(g) for g in d["and"]))
    if "or" in d:
        return Or(tuple(f(g) for g in d["or"]))
    if "not" in d:
        return Not(f(d["not"]))
    if "implies" in d:
        a, b = d["implies"]
        return Implies(f(a), f(b))
    if "exactly" in d:
        return ExactlyK(tuple(f(g) for g in d["of"]), int(d["exactly"]))
    if "true" in d:
        return TRUE
    raise ConstraintError(f"unknown formula keys {sorted(d)}")


def term_to_json(t: Term, features, outputs):
    if isinstance(t, InputFeature):
        return {"feature": features[t.index] if features else t.index}
    if isinstance(t, OutputComponent):
        return {"output": outputs[t.index] if outputs else t.index}
    if isinstance(t, Constant):
        return {"const": repr(float(t.value))}
    if isinstance(t, Sum):
        return {"sum": [term_to_json(s, features, outputs) for s in t.terms]}
    if isinstance(t, Scale):
        return {"scale": repr(float(t.coef)), "term": term_to_json(t.term, features, outputs)}
    if isinstance(t, IfPositiveThen):
        return {
            "if_positive": outputs[t.output] if outputs else t.output,
            "then": term_to_json(t.then, features, outputs),
            "else": term_to_json(t.otherwise, features, outputs),
        }
    raise TypeError(t)


def formula_to_json(f: Formula, features, outputs):
    g = lambda h: formula_to_json(h, features, outputs)  # noqa: E731
    if isinstance(f, Compare):
        return {"cmp": f.op, "lhs": term_to_json(f.lhs, features, outputs), "rhs": term_to_json(f.rhs, features, outputs)}
    if isinstance(f, Truth):
        return f.value
    if isinstance(f, And):
        return {"and": [g(h) for h in f.items]}
    if isinstance(f, Or):
        return {"or": [g(h) for h in f.items]}
    if isinstance(f, Not):
        return {"not": g(f.item)}
    if isinstance(f, Implies):
        return {"implies": [g(f.premise), g(f.conclusion)]}
    if isinstance(f, ExactlyK):
        return {"exactly": f.k, "of": [g(h) for h in f.items]}
    raise TypeError(f)


def constraint_from_json(doc: dict, features: Sequence[str], outputs: Sequence[str]) -> DomainConstraint:
    """Parse ``{"premise": ..., "conclusion": ...}`` against feature/output names."""
    if "conclusion" not in doc:
        raise ConstraintError("constraint file needs a 'conclusion'")
    premise = formula_from_json(doc.get("premise", True), features, outputs)
    if has_outputs(premise):
        raise ConstraintError("the premise may only mention input features")
    return DomainConstraint(
        conclusion=formula_from_json(doc["conclusion"], features, outputs),
        premise=premise,
        feature_names=tuple(features),
        output_names=tuple(outputs),
        name=doc.get("name", "K"),
    )


def constraint_to_json(K: DomainConstraint) -> dict:
    return {
        "name": K.name,
        "premise": formula_to_json(K.premise, K.feature_names, K.output_names),
        "conclusion": formula_to_json(K.conclusion, K.feature_names, K.output_names),
    }


def load_constraint(path, features, outputs) -> DomainConstraint:
    return constraint_from_json(json.loads(Path(path).read_text()), features, outputs)
