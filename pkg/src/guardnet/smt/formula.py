"""Render constraint formulas as SMT-LIB terms.

Features and outputs are supplied as callbacks returning SMT terms, so the
same formula can be emitted over latent variables, over an encoded network,
or over plain numbers. A ``margin`` makes every comparison hold with slack
in the direction it is asserted.
"""

from __future__ import annotations

from typing import Callable

from .. import constraints as c
from .emit import add, app, conj, count_true, disj, ite, neg, num

TermFn = Callable[[int], str]

_NEGATED = {"<": ">=", "<=": ">", ">=": "<", ">": "<=", "=": "!="}


def term_smt(t, feat: TermFn, out: TermFn) -> str:
    if isinstance(t, c.InputFeature):
        return feat(t.index)
    if isinstance(t, c.OutputComponent):
        return out(t.index)
    if isinstance(t, c.Constant):
        return num(t.value)
    if isinstance(t, c.Sum):
        return add([term_smt(s, feat, out) for s in t.terms])
    if isinstance(t, c.Scale):
        return app("*", num(t.coef), term_smt(t.term, feat, out))
    if isinstance(t, c.IfPositiveThen):
        return ite(
            app(">", out(t.output), "0.0"),
            term_smt(t.then, feat, out),
            term_smt(t.otherwise, feat, out),
        )
    raise TypeError(f"not a term: {t!r}")


def _compare(a: str, op: str, b: str, margin: float) -> str:
    if margin == 0:
        if op == "!=":
            return neg(app("=", a, b))
        return app(op, a, b)
    m = num(margin)
    if op in ("<", "<="):
        return app(op, app("+", a, m), b)
    if op in (">", ">="):
        return app(op, a, app("+", b, m))
    if op == "=":
        return app("=", a, b)
    return disj([app("<", app("+", a, m), b), app(">", a, app("+", b, m))])


def formula_smt(f, feat: TermFn, out: TermFn, margin: float = 0.0, positive: bool = True) -> str:
    """SMT text for ``f`` (or for its negation when ``positive`` is False)."""
    if isinstance(f, c.Truth):
        return "true" if f.value == positive else "false"
    if isinstance(f, c.Compare):
        op = f.op if positive else _NEGATED[f.op]
        return _compare(term_smt(f.lhs, feat, out), op, term_smt(f.rhs, feat, out), margin)
    if isinstance(f, c.Not):
        return formula_smt(f.item, feat, out, margin, not positive)
    if isinstance(f, (c.And, c.Or)):
        parts = [formula_smt(g, feat, out, margin, positive) for g in f.items]
        is_and = isinstance(f, c.And) == positive
        return conj(parts) if is_and else disj(parts)
    if isinstance(f, c.Implies):
        return formula_smt(c.Or((c.Not(f.premise), f.conclusion)), feat, out, margin, positive)
    if isinstance(f, c.ExactlyK):
        items = [formula_smt(g, feat, out) for g in f.items]
        eq = app("=", count_true(items), str(int(f.k)))
        return eq if positive else neg(eq)
    raise TypeError(f"not a formula: {f!r}")


def constraint_smt(K: c.DomainConstraint, feat: TermFn, out: TermFn, margin: float = 0.0, positive=True) -> str:
    """``P => C`` (or its negation ``P and not C``)."""
    return formula_smt(c.Implies(K.premise, K.conclusion), feat, out, margin, positive)
