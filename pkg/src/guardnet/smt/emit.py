"""SMT-LIB 2 text construction.

Numbers are written as plain decimals (never scientific notation) using the
shortest string that reads back as the same double, so ``0.1`` stays ``0.1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


def num(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"cannot emit non-finite constant {x}")
    if x == 0:
        return "0.0"
    s = repr(abs(x))
    if "e" in s or "E" in s:
        s = format(Decimal(s), "f")
    if "." not in s:
        s += ".0"
    return f"(- {s})" if x < 0 else s


def app(head: str, *args: str) -> str:
    return "(" + " ".join((head, *args)) + ")"


def add(terms: Sequence[str]) -> str:
    terms = [t for t in terms if t != "0.0"]
    if not terms:
        return "0.0"
    if len(terms) == 1:
        return terms[0]
    return app("+", *terms)


def conj(items: Sequence[str]) -> str:
    items = [i for i in items if i != "true"]
    if "false" in items:
        return "false"
    if not items:
        return "true"
    return items[0] if len(items) == 1 else app("and", *items)


def disj(items: Sequence[str]) -> str:
    items = [i for i in items if i != "false"]
    if "true" in items:
        return "true"
    if not items:
        return "false"
    return items[0] if len(items) == 1 else app("or", *items)


def neg(item: str) -> str:
    if item == "true":
        return "false"
    if item == "false":
        return "true"
    return app("not", item)


def ite(c: str, a: str, b: str) -> str:
    if c == "true":
        return a
    if c == "false":
        return b
    return app("ite", c, a, b)


def count_true(items: Sequence[str]) -> str:
    """Integer sum of 0/1 indicators."""
    return add_int([ite(i, "1", "0") for i in items])


def add_int(terms: Sequence[str]) -> str:
    terms = [t for t in terms if t != "0"]
    if not terms:
        return "0"
    return terms[0] if len(terms) == 1 else app("+", *terms)


def linear(coeffs: np.ndarray, const: float, symbols: Sequence[str]) -> str:
    """``sum_i coeffs[i] * symbols[i] + const`` with zero terms dropped."""
    terms = []
    for c, s in zip(coeffs, symbols):
        if c == 0:
            continue
        terms.append(s if c == 1 else app("*", num(c), s))
    if const != 0 or not terms:
        terms.append(num(const))
    return add(terms)


SMT_OP = {"<": "<", "<=": "<=", "=": "=", ">=": ">=", ">": ">"}


@dataclass(frozen=True)
class LinearAtom:
    """``coeffs . theta + const  (op)  0`` over the solver parameters."""

    coeffs: np.ndarray
    const: float
    op: str

    def holds(self, theta) -> bool:
        v = float(np.dot(self.coeffs, theta)) + self.const
        return {"<": v < 0, "<=": v <= 0, "=": v == 0, ">=": v >= 0, ">": v > 0}[self.op]

    def holds_exact(self, theta_frac) -> bool:
        """Truth in rational arithmetic, reading constants as the emitted decimals."""
        v = sum(
            (Fraction(repr(float(c))) * t for c, t in zip(self.coeffs, theta_frac) if c != 0),
            Fraction(repr(float(self.const))),
        )
        return {"<": v < 0, "<=": v <= 0, "=": v == 0, ">=": v >= 0, ">": v > 0}[self.op]

    def to_smt(self, symbols: Sequence[str]) -> str:
        return app(SMT_OP[self.op], linear(self.coeffs, 0.0, symbols), num(-self.const))


class Script:
    """Accumulates declarations and assertions for one solver run."""

    def __init__(self, logic: str = "ALL", seed: int | None = None):
        self.logic = logic
        self.seed = seed
        self.decls: list[tuple[str, str]] = []
        self._declared: set[str] = set()
        self.defs: list[str] = []
        self.asserts: list[str] = []
        self.tail: list[str] = []

    def declare(self, name: str, sort: str = "Real") -> str:
        if name not in self._declared:
            self._declared.add(name)
            self.decls.append((name, sort))
        return name

    def declare_all(self, names: Iterable[str], sort: str = "Real") -> None:
        for n in names:
            self.declare(n, sort)

    def define(self, name: str, sort: str, expr: str) -> str:
        self.defs.append(f"(define-fun {name} () {sort} {expr})")
        return name

    def add(self, expr: str, name: str | None = None) -> None:
        if name is None:
            self.asserts.append(app("assert", expr))
        else:
            self.asserts.append(app("assert", f"(! {expr} :named {name})"))

    def render(self, commands: Sequence[str] = ("(check-sat)",)) -> str:
        lines = ["(set-option :produce-models true)", "(set-option :produce-unsat-cores true)"]
        if self.seed is not None:
            lines.append(f"(set-option :random-seed {int(self.seed)})")
        lines.append(f"(set-logic {self.logic})")
        lines += [f"(declare-const {n} {s})" for n, s in self.decls]
        lines += self.defs
        lines += self.asserts
        lines += self.tail
        lines += list(commands)
        return "\n".join(lines) + "\n"
