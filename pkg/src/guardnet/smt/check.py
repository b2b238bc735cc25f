"""Deciding whether concrete last-layer parameters satisfy a translated constraint."""

from __future__ import annotations

import logging
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .emit import Script, app, num
from .solver import Sat, Solver, Unsat

log = logging.getLogger(__name__)


def model_to_theta(model: Mapping[str, Fraction], symbols: Sequence[str]) -> np.ndarray:
    """Round rational model values to the nearest doubles."""
    return np.array([float(model[s]) for s in symbols], dtype=np.float64)


def solver_finds_violation(theta, layer_constraint, solver: Solver, margin: float = 0.0):
    """Ask for a latent point in the box where the premise holds and the conclusion fails.

    Returns True (violation exists), False (none) or None (solver gave up).
    """
    sc = Script()
    sc.add(layer_constraint.violation_smt(theta, sc, margin))
    out = solver.check(sc)
    if isinstance(out, Sat):
        return True
    if isinstance(out, Unsat):
        return False
    log.warning("solver could not decide the last-layer constraint at fixed weights: %s", out.reason)
    return None


def forall_holds(theta, layer_constraint, solver: Solver):
    """Literal quantified check: substitute ``theta`` into ``forall x' in box: P => C``."""
    sc = Script()
    sc.declare_all(layer_constraint.symbols)
    for s, v in zip(layer_constraint.symbols, theta):
        sc.add(app("=", s, num(v)))
    sc.add(layer_constraint.forall_smt())
    out = solver.check(sc)
    if isinstance(out, Sat):
        return True
    if isinstance(out, Unsat):
        return False
    log.warning("solver could not decide forall query: %s", out.reason)
    return None


def check_weights_satisfy(
    theta, layer_constraint, solver: Solver | None = None, exact: bool = True, margin: float = 0.0
) -> bool:
    """True when ``theta`` provably satisfies the last-layer constraint.

    The interval evaluation decides most cases natively. It is exact when the
    conclusion is a conjunction of comparisons; otherwise a negative answer
    is only "not shown", and with ``exact`` the solver settles it. A positive
    ``margin`` demands that every comparison hold with that much slack.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (layer_constraint.layout.n_params,):
        raise ValueError(f"expected {layer_constraint.layout.n_params} parameters, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        return False
    if layer_constraint.holds_definitely(theta, margin):
        return True
    if layer_constraint.exact or not exact:
        return False
    if solver is None:
        raise ValueError("a solver is needed to decide this constraint exactly")
    # a negative margin weakens the negated conclusion: look for points where
    # the constraint fails or holds with less than ``margin`` to spare
    return solver_finds_violation(theta, layer_constraint, solver, -margin) is False
