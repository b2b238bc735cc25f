"""Command-line entry point: gen-data, train, baseline, eval, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .constraints import ConstraintError
from .data import TASK_KINDS, DataError, generate_task, load_task, write_task
from .network import Network
from .smt.solver import Solver, SolverConfig, SolverError
from .trainer import ConfigError, InfeasibleError, TrainConfig, TrainingFailed, train, train_baseline
from .translation import TranslationError
from .verify import MetricsError, evaluate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_SOLVER = 5
EXIT_INFEASIBLE = 6

log = logging.getLogger("guardnet")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="guardnet", description="Train networks that provably satisfy domain constraints.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic task (CSV, schema, constraint, config)")
    g.add_argument("--kind", required=True, choices=TASK_KINDS)
    g.add_argument("--rows", type=int, default=400)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--violation-rate", type=float, default=None)
    g.add_argument("--out", required=True)

    def data_args(q, model_in=False):
        q.add_argument("--data", required=True, help="CSV file")
        q.add_argument("--constraint", required=True, help="constraint JSON")
        q.add_argument("--schema", help="schema JSON (default: schema.json next to the CSV)")
        q.add_argument("--seed", type=int, default=None, help="split and training seed")
        q.add_argument("--solver", help="SMT solver executable (default: $GN_SOLVER or z3)")
        q.add_argument("--solver-timeout-ms", type=int, default=None)
        if model_in:
            q.add_argument("--model", required=True)

    for name, helptext in (("train", "constrained training"), ("baseline", "unconstrained training")):
        t = sub.add_parser(name, help=helptext)
        data_args(t)
        t.add_argument("--config", required=True)
        t.add_argument("--out", required=True, help="model JSON to write")
        t.add_argument("--report", help="JSON-lines training log")

    e = sub.add_parser("eval", help="constraint accuracy and predictive metrics on the test split")
    data_args(e, model_in=True)
    e.add_argument("--report")

    v = sub.add_parser("verify", help="constraint accuracy and adversity index on train and test")
    data_args(v, model_in=True)
    v.add_argument("--delta", type=float, default=0.1)
    v.add_argument("--report")
    return p


def _schema_path(args) -> str:
    return args.schema or str(Path(args.data).with_name("schema.json"))


def _solver(args, seed: int = 0) -> Solver:
    cfg = SolverConfig(args.solver, args.solver_timeout_ms or 60_000, seed)
    return Solver(cfg)


def _write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def _load_model(path) -> tuple[Network, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read model {path}: {e}") from None
    try:
        return Network.from_dict(doc["network"] if "network" in doc else doc), doc
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed model {path}: {e}") from None


def _split_seed(args, doc: dict) -> int:
    """Explicit --seed, else the seed the model was trained with, so the splits match."""
    if args.seed is not None:
        return args.seed
    return int(doc.get("split_seed", 0))


def cmd_gen_data(args) -> int:
    task = generate_task(args.kind, args.rows, args.seed, args.violation_rate)
    paths = write_task(task, args.out)
    print(json.dumps(paths, indent=2))
    return EXIT_OK


def cmd_train(args, constrained: bool) -> int:
    cfg = TrainConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.solver:
        cfg.solver_path = args.solver
    if args.solver_timeout_ms:
        cfg.solver_timeout_ms = args.solver_timeout_ms
    data, K = load_task(args.data, _schema_path(args), args.constraint, args.seed or 0)
    task = data.schema.task
    if constrained:
        solver = Solver(cfg.solver_config())
        res = train(data.X_train, data.y_train, K, task, cfg, data.X_val, data.y_val, data.schema.n_outputs, solver)
    else:
        res = train_baseline(
            data.X_train, data.y_train, task, cfg, data.X_val, data.y_val, data.schema.n_outputs, sorted(K.features())
        )
    doc = {
        "network": res.network.to_dict(),
        "task": task.value,
        "constrained": constrained,
        "split_seed": args.seed or 0,
        "config": cfg.to_dict(),
        "certificate": None if res.certificate is None else res.certificate.__dict__,
    }
    Path(args.out).write_text(json.dumps(doc) + "\n")
    if args.report:
        res.report.write_jsonl(args.report)
    print(json.dumps({"model": args.out, "wall_clock": res.report.wall_clock, **res.report.final}, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    net, doc = _load_model(args.model)
    data, K = load_task(args.data, _schema_path(args), args.constraint, _split_seed(args, doc))
    rep = evaluate(net, data.X_test, data.y_test, data.schema.task, K)
    _write_json(args.report, rep.to_dict())
    return EXIT_OK


def cmd_verify(args) -> int:
    if not args.delta > 0:
        raise ConfigError("--delta must be positive")
    net, doc = _load_model(args.model)
    data, K = load_task(args.data, _schema_path(args), args.constraint, _split_seed(args, doc))
    rep = evaluate(net, data.X_eval, data.y_eval, data.schema.task, K, _solver(args), args.delta)
    out = rep.to_dict()
    out["delta"] = args.delta
    _write_json(args.report, out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:  # argparse exits on bad usage and on --help
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command in ("train", "baseline"):
            return cmd_train(args, args.command == "train")
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_verify(args)
    except (ConfigError, TranslationError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ConstraintError, MetricsError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (InfeasibleError, TrainingFailed) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
