import numpy as np
import pytest

from guardnet.network import Activation, LayerParams, Network
from guardnet.smt.solver import Solver, SolverConfig


def _have_solver() -> bool:
    try:
        SolverConfig().resolve()
        return True
    except Exception:
        return False


HAVE_SOLVER = _have_solver()


@pytest.fixture(scope="session")
def solver():
    if not HAVE_SOLVER:
        pytest.skip("no SMT solver on PATH")
    return Solver(SolverConfig(timeout_ms=20000))


def random_net(rng, sizes, skip=(), activation=Activation.RELU, scale=1.0) -> Network:
    """Random network with layer widths ``sizes`` (input first, output last)."""
    layers = []
    n_in = sizes[0]
    for i, w in enumerate(sizes[1:]):
        last = i == len(sizes) - 2
        fan_in = n_in + (len(skip) if last else 0)
        layers.append(
            LayerParams(
                rng.normal(0, scale, (fan_in, w)),
                rng.normal(0, scale, w),
                Activation.IDENTITY if last else activation,
            )
        )
        n_in = w
    return Network(layers, tuple(skip), sizes[0])


def random_linear_instance(rng, n_soft, n_vars=2):
    """Random MaxSMT instance: box hard constraints plus linear soft atoms."""
    from guardnet.smt.emit import LinearAtom

    symbols = [f"w{i}" for i in range(n_vars)]
    hard = []
    for i in range(n_vars):
        e = np.zeros(n_vars)
        e[i] = 1.0
        hard += [LinearAtom(e, 1.0, ">="), LinearAtom(e, -1.0, "<=")]
    ops = ["<", "<=", ">=", ">"]
    soft = [
        LinearAtom(np.round(rng.normal(0, 1, n_vars), 2), float(np.round(rng.normal(0, 0.7), 2)), ops[rng.integers(4)])
        for _ in range(n_soft)
    ]
    return symbols, hard, soft


def brute_force_max(hard, softs, symbols, solver) -> int:
    """Largest number of ``softs`` jointly satisfiable with ``hard``, by subset enumeration."""
    from itertools import combinations

    from guardnet.smt.solver import Sat, solve_satisfiability

    for k in range(len(softs), -1, -1):
        for subset in combinations(range(len(softs)), k):
            if isinstance(solve_satisfiability(list(hard) + [softs[i] for i in subset], symbols, solver), Sat):
                return k
    return -1
