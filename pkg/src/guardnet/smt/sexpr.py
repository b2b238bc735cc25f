"""Minimal S-expression reader for solver replies."""

from __future__ import annotations

from fractions import Fraction


class SexprError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c == '"':
            j = i + 1
            while True:
                j = text.find('"', j)
                if j < 0:
                    raise SexprError("unterminated string literal")
                if j + 1 < n and text[j + 1] == '"':  # "" escapes a quote
                    j += 2
                    continue
                break
            out.append(text[i : j + 1])
            i = j + 1
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SexprError("unterminated quoted symbol")
            out.append(text[i + 1 : j])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"|':
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_all(text: str) -> list:
    """Parse every top-level expression in ``text``."""
    toks = tokenize(text)
    pos = 0
    out = []

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise SexprError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while True:
                if pos >= len(toks):
                    raise SexprError("unbalanced parentheses")
                if toks[pos] == ")":
                    pos += 1
                    return items
                items.append(read())
        if t == ")":
            raise SexprError("unexpected ')'")
        return t

    while pos < len(toks):
        out.append(read())
    return out


def to_fraction(e) -> Fraction:
    """Value of a numeric constant such as ``0.5``, ``(- 2)``, ``(/ 1.0 3.0)``."""
    if isinstance(e, str):
        try:
            return Fraction(e)
        except ValueError:
            raise SexprError(f"not a numeral: {e!r}") from None
    if isinstance(e, list) and e:
        head = e[0]
        if head == "-" and len(e) == 2:
            return -to_fraction(e[1])
        if head == "-" and len(e) == 3:
            return to_fraction(e[1]) - to_fraction(e[2])
        if head == "/" and len(e) == 3:
            return to_fraction(e[1]) / to_fraction(e[2])
        if head == "+" and len(e) >= 2:
            return sum((to_fraction(a) for a in e[1:]), Fraction(0))
        if head == "to_real" and len(e) == 2:
            return to_fraction(e[1])
    raise SexprError(f"unsupported value expression: {e!r}")


def to_bool(e) -> bool:
    if e == "true":
        return True
    if e == "false":
        return False
    raise SexprError(f"not a Boolean value: {e!r}")
