"""Core-guided MaxSMT with unit weights.

Each round asserts every soft constraint as ``soft_i or r_i1 or ... or r_im``
under a named selector. An unsat core names the softs that cannot hold
together; each of them receives a fresh relaxation Boolean and exactly one of
the new Booleans may be true. The number of rounds is the number of softs
that must be given up, so the first satisfiable round is optimal.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Sequence

from .emit import Script, app, count_true, disj
from .solver import Sat, Solver, Unknown, Unsat

log = logging.getLogger(__name__)

CORE_UNAVAILABLE = "<core-unavailable>"


@dataclass
class MaxSmtResult:
    model: dict
    satisfied_count: int
    iterations: int


def _base(hard: Sequence[str], symbols: Sequence[str], base: Script | None) -> Script:
    sc = copy.deepcopy(base) if base is not None else Script()
    sc.declare_all(symbols)
    for h in hard:
        sc.add(h)
    return sc


def fu_malik_maxsmt(
    hard: Sequence[str],
    softs: Sequence[str],
    symbols: Sequence[str],
    solver: Solver,
    base: Script | None = None,
    max_rounds: int | None = None,
) -> MaxSmtResult | None:
    """Maximise the number of satisfied ``softs`` subject to ``hard``.

    ``base`` may carry declarations and definitions the formulas refer to.
    Returns None when the hard part is not shown satisfiable or the solver
    gives up midway.
    """
    root = _base(hard, symbols, base)
    first = solver.check(copy.deepcopy(root), symbols)
    if not isinstance(first, Sat):
        log.info("hard constraints not satisfiable: %s", first)
        return None
    n = len(softs)
    if n == 0:
        return MaxSmtResult(first.model, 0, 0)

    relax: list[list[str]] = [[] for _ in softs]
    rings: list[list[str]] = []
    names = [f"soft_{i}" for i in range(n)]
    index = {nm: i for i, nm in enumerate(names)}
    rounds = 0
    limit = n if max_rounds is None else max_rounds
    while True:
        sc = copy.deepcopy(root)
        for ring in rings:
            sc.declare_all(ring, "Bool")
            sc.add(app("=", count_true(ring), "1"))
        for i, s in enumerate(softs):
            sc.add(disj([s, *relax[i]]), name=names[i])
        out = solver.check(sc, symbols)
        if isinstance(out, Sat):
            return MaxSmtResult(out.model, n - rounds, rounds)
        if isinstance(out, Unknown):
            log.warning("MaxSMT round %d: solver gave up (%s)", rounds, out.reason)
            return None
        assert isinstance(out, Unsat)
        if CORE_UNAVAILABLE in out.core:
            log.info("solver returned no unsat core; switching to cardinality search")
            return linear_search_maxsmt(hard, softs, symbols, solver, base, upper=n - rounds)
        core = [index[c] for c in out.core if c in index]
        if not core or rounds >= limit:
            log.warning("MaxSMT: empty core or round limit reached after %d rounds", rounds)
            return None
        ring = []
        for i in core:
            r = f"relax_{rounds}_{i}"
            relax[i].append(r)
            ring.append(r)
        rings.append(ring)
        rounds += 1


def linear_search_maxsmt(
    hard: Sequence[str],
    softs: Sequence[str],
    symbols: Sequence[str],
    solver: Solver,
    base: Script | None = None,
    upper: int | None = None,
) -> MaxSmtResult | None:
    """Try ``at least k softs hold`` for decreasing ``k``; first Sat is optimal."""
    root = _base(hard, symbols, base)
    flags = [f"pick_{i}" for i in range(len(softs))]
    root.declare_all(flags, "Bool")
    for f, s in zip(flags, softs):
        root.add(app("=>", f, s))
    top = len(softs) if upper is None else upper
    for k in range(top, -1, -1):
        sc = copy.deepcopy(root)
        sc.add(app(">=", count_true(flags), str(k)))
        out = solver.check(sc, symbols)
        if isinstance(out, Sat):
            return MaxSmtResult(out.model, k, top - k)
        if isinstance(out, Unknown):
            return None
    return None

