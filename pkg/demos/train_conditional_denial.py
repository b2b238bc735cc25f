"""Train on a loan-style task where low income with bad history must never
get a loan, then compare with plain gradient descent.

Requires an SMT solver (z3) on PATH. Takes several minutes on one core, most
of it spent searching the baseline for counterexamples; instances the solver
cannot decide within 10 s are left out of the index and reported.
Run: python3 demos/train_conditional_denial.py
"""

import tempfile

from guardnet.data import generate_task, load_task, write_task
from guardnet.smt.solver import Solver, SolverConfig
from guardnet.trainer import TrainConfig, train, train_baseline
from guardnet.verify import evaluate

task = generate_task("conditional-denial", 400, seed=1)
paths = write_task(task, tempfile.mkdtemp())
data, K = load_task(paths["data"], paths["schema"], paths["constraint"], seed=1)
cfg = TrainConfig.from_dict(task.config)
kind, n_out = data.schema.task, data.schema.n_outputs
print("constraint:", task.constraint["name"])

base = train_baseline(data.X_train, data.y_train, kind, cfg, data.X_val, data.y_val, n_out, sorted(K.features()))
solver = Solver(SolverConfig(timeout_ms=10_000))
res = train(data.X_train, data.y_train, K, kind, cfg, data.X_val, data.y_val, n_out, solver)

for name, r in (("baseline", base), ("constrained", res)):
    rep = evaluate(r.network, data.X_eval, data.y_eval, kind, K, solver, delta=0.1)
    test = evaluate(r.network, data.X_test, data.y_test, kind, K)
    print(
        f"{name:12s} wall {r.report.wall_clock:7.1f}s  test acc {test.predictive['accuracy']:5.1f}  "
        f"constraint acc {rep.constraint_accuracy:5.1f}  AdI {rep.adi:.3f}"
    )
print("training summary:", res.report.final)
