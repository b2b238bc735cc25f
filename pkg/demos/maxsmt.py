"""Fu-Malik MaxSMT on a tiny instance, compared with brute force.

Requires an SMT solver (z3) on PATH.
Run: python3 demos/maxsmt.py
"""

from itertools import combinations

from guardnet.smt.maxsmt import fu_malik_maxsmt
from guardnet.smt.solver import Sat, Solver

solver = Solver()
symbols = ["a", "b"]
hard = ["(<= 0.0 a 1.0)", "(<= 0.0 b 1.0)"]
# four wishes, at most three can hold together
softs = ["(> a 0.8)", "(< a 0.2)", "(> b 0.5)", "(> (+ a b) 1.5)"]

res = fu_malik_maxsmt(hard, softs, symbols, solver)
print(f"Fu-Malik: {res.satisfied_count} of {len(softs)} soft constraints, {res.iterations} relaxation rounds")
print("model:", {k: float(v) for k, v in res.model.items()})


def brute_force():
    from guardnet.smt.emit import Script

    for k in range(len(softs), -1, -1):
        for subset in combinations(softs, k):
            sc = Script()
            sc.declare_all(symbols)
            for f in [*hard, *subset]:
                sc.add(f)
            if isinstance(solver.check(sc, symbols), Sat):
                return k
    return 0


print("brute force optimum:", brute_force())
