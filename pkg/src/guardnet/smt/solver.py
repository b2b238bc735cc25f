"""External SMT-LIB 2 solver over a child-process pipe.

Every query is a fresh script fed on stdin; replies are parsed into exactly
one :class:`SmtOutcome`. No native bindings are used, so any compliant
solver binary can be plugged in through ``--solver`` or ``GN_SOLVER``.
"""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

from .emit import Script
from .sexpr import SexprError, parse_all, to_bool, to_fraction

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 60_000


class SolverError(RuntimeError):
    pass


class SolverNotFound(SolverError):
    pass


class SolverProtocolError(SolverError):
    """The solver replied with something that is not a verdict."""


@dataclass(frozen=True)
class Sat:
    model: dict


@dataclass(frozen=True)
class Unsat:
    core: frozenset = frozenset()


@dataclass(frozen=True)
class Unknown:
    reason: str = "unknown"


SmtOutcome = Union[Sat, Unsat, Unknown]


@dataclass
class SolverConfig:
    path: str | None = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    seed: int = 0

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("solver timeout must be positive")

    def resolve(self) -> str:
        cand = self.path or os.environ.get("GN_SOLVER") or "z3"
        found = shutil.which(cand)
        if found is None:
            raise SolverNotFound(
                f"SMT solver {cand!r} not found; install z3 (pip install z3-solver) "
                "or pass --solver / set GN_SOLVER"
            )
        return found


def _command(exe: str, timeout_ms: int) -> list[str]:
    base = os.path.basename(exe).lower()
    if base.startswith("z3"):
        return [exe, "-in", "-smt2", f"-t:{timeout_ms}"]
    if base.startswith("cvc5") or base.startswith("cvc4"):
        return [exe, "--lang=smt2", "--incremental", f"--tlimit-per={timeout_ms}"]
    return [exe]


@dataclass
class Solver:
    config: SolverConfig = field(default_factory=SolverConfig)
    calls: int = 0

    def __post_init__(self):
        self.exe = self.config.resolve()

    def run(self, text: str) -> list:
        """Feed ``text`` to a fresh process and return the parsed replies."""
        self.calls += 1
        wall = self.config.timeout_ms / 1000.0 + 10.0
        try:
            proc = subprocess.run(
                _command(self.exe, self.config.timeout_ms),
                input=text,
                capture_output=True,
                text=True,
                timeout=wall,
            )
        except subprocess.TimeoutExpired:
            return ["unknown"]
        except OSError as e:
            raise SolverNotFound(f"cannot start solver {self.exe!r}: {e}") from e
        try:
            return parse_all(proc.stdout)
        except SexprError as e:
            raise SolverProtocolError(f"unparseable solver output: {e}\n{proc.stdout[:500]}") from e

    def check(self, script: Script, symbols: Sequence[str] = (), bools: Sequence[str] = ()) -> SmtOutcome:
        """Run ``script`` and read back ``symbols`` (Real/Int) and ``bools`` on Sat."""
        if script.seed is None:
            script.seed = self.config.seed
        replies = self.run(
            script.render(("(check-sat)", "(get-model)", "(get-unsat-core)", "(get-info :reason-unknown)"))
        )
        return interpret(replies, symbols, bools)


def interpret(replies: list, symbols: Sequence[str] = (), bools: Sequence[str] = ()) -> SmtOutcome:
    if not replies:
        raise SolverProtocolError("solver produced no output")
    verdict = replies[0]
    if verdict == "unknown":
        reason = "unknown"
        for r in replies[1:]:
            if isinstance(r, list) and len(r) == 2 and r[0] == ":reason-unknown":
                reason = str(r[1]).strip('"')
        return Unknown(reason)
    if verdict == "unsat":
        core = _find_core(replies[1:])
        return Unsat(frozenset(core) if core is not None else frozenset({"<core-unavailable>"}))
    if verdict == "sat":
        model = _find_model(replies[1:])
        if model is None:
            raise SolverProtocolError("sat reply without a model")
        out = {}
        for s in symbols:
            if s not in model:
                out[s] = Fraction(0)  # solvers may omit don't-care symbols
                continue
            try:
                out[s] = to_fraction(model[s])
            except SexprError:
                return Unknown(f"non-rational model value for {s}")
        for s in bools:
            out[s] = to_bool(model[s]) if s in model else False
        return Sat(out)
    if isinstance(verdict, list) and verdict and verdict[0] == "error":
        raise SolverProtocolError(f"solver error: {' '.join(map(str, verdict[1:]))}")
    raise SolverProtocolError(f"unexpected solver reply {verdict!r}")


def _find_model(replies) -> dict | None:
    for r in replies:
        if not isinstance(r, list) or (r and r[0] == "error"):
            continue
        items = r[1:] if r and r[0] == "model" else r
        if all(isinstance(d, list) and d and d[0] == "define-fun" for d in items):
            return {d[1]: d[4] for d in items if len(d) == 5}
    return None


def _find_core(replies) -> list | None:
    for r in replies:
        if isinstance(r, list) and (not r or r[0] != "error") and all(isinstance(x, str) for x in r):
            if r and r[0].startswith(":"):
                continue
            return list(r)
    return None


def solve_satisfiability(
    hard: Sequence[str],
    symbols: Sequence[str],
    solver: Solver,
    declarations: Sequence[tuple[str, str]] = (),
) -> SmtOutcome:
    """Plain satisfiability of ``hard`` over Real ``symbols``."""
    sc = Script()
    sc.declare_all(symbols)
    for name, sort in declarations:
        sc.declare(name, sort)
    for h in hard:
        sc.add(h)
    return solver.check(sc, symbols)
