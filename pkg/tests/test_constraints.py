import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guardnet import constraints as c
from guardnet.smt.emit import Script, app, num
from guardnet.smt.formula import constraint_smt
from guardnet.smt.solver import Sat, Unsat

from conftest import HAVE_SOLVER


def denial_constraint():
    # (income < 0.5 and credit = 0) => out0 > out1
    P = c.conj(c.Compare(c.InputFeature(0), "<", c.Constant(0.5)), c.Compare(c.InputFeature(1), "=", c.Constant(0.0)))
    C = c.Compare(c.OutputComponent(0), ">", c.OutputComponent(1))
    return c.DomainConstraint(C, P)


def permutation_constraint(n=3):
    pos = lambda i, r: c.Compare(c.OutputComponent(i * n + r), ">", c.Constant(0.0))  # noqa: E731
    groups = [c.ExactlyK(tuple(pos(i, r) for r in range(n)), 1) for i in range(n)]
    groups += [c.ExactlyK(tuple(pos(i, r) for i in range(n)), 1) for r in range(n)]
    return c.DomainConstraint(c.And(tuple(groups)))


# evaluate_constraint --------------------------------------------------------


def test_false_premise_is_vacuous():
    K = denial_constraint()
    x = np.array([0.9, 0.0])
    for y in ([1.0, 0.0], [0.0, 1.0], [-5.0, 5.0]):
        assert c.evaluate_constraint(K, x, np.array(y))


def test_true_premise_checks_conclusion():
    K = denial_constraint()
    x = np.array([0.2, 0.0])
    assert c.evaluate_constraint(K, x, np.array([1.0, 0.0]))
    assert not c.evaluate_constraint(K, x, np.array([0.0, 1.0]))
    assert not c.evaluate_constraint(K, x, np.array([0.5, 0.5]))  # strict


def test_exactly_one_on_permutation_pattern():
    K = permutation_constraint()
    perm = -np.ones((3, 3))
    perm[[0, 1, 2], [2, 0, 1]] = 1.0
    assert c.evaluate_constraint(K, np.zeros(1), perm.reshape(-1))
    assert not c.evaluate_constraint(K, np.zeros(1), np.ones(9))
    assert not c.evaluate_constraint(K, np.zeros(1), -np.ones(9))


def test_if_positive_sum():
    outs = [c.IfPositiveThen(i, c.Constant(i + 1.0), c.Constant(0.0)) for i in range(3)]
    K = c.DomainConstraint(c.Compare(c.Sum(tuple(outs)), ">", c.Constant(3.0)))
    x = np.zeros(1)
    assert c.evaluate_constraint(K, x, np.array([-1.0, 1.0, 1.0]))  # 2 + 3
    assert not c.evaluate_constraint(K, x, np.array([1.0, 1.0, -1.0]))  # 1 + 2
    assert not c.evaluate_constraint(K, x, np.array([1.0, 0.0, -1.0]))  # zero is not positive


def test_satisfied_is_vectorised():
    K = denial_constraint()
    X = np.array([[0.2, 0.0], [0.2, 1.0], [0.9, 0.0]])
    Y = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    assert c.satisfied(K, X, Y).tolist() == [False, True, True]


def test_exactly_k_validates_k():
    a = c.Compare(c.OutputComponent(0), ">", c.Constant(0.0))
    with pytest.raises(c.ConstraintError):
        c.ExactlyK((a,), 2)
    with pytest.raises(c.ConstraintError):
        c.ExactlyK((a,), 0)


def test_unknown_operator_rejected():
    with pytest.raises(c.ConstraintError):
        c.Compare(c.Constant(0.0), "!=", c.Constant(1.0))


# JSON ---------------------------------------------------------------------


FEATS = ["income", "credit_history", "debt"]
OUTS = ["no_loan", "loan"]


def test_json_by_name():
    doc = {
        "name": "deny",
        "premise": {"and": [{"cmp": "<", "lhs": {"feature": "income"}, "rhs": 5000}, {"cmp": "=", "lhs": {"feature": "credit_history"}, "rhs": 0}]},
        "conclusion": {"cmp": ">", "lhs": {"output": "no_loan"}, "rhs": {"output": "loan"}},
    }
    K = c.constraint_from_json(doc, FEATS, OUTS)
    assert K.features() == {0, 1}
    assert c.referenced_outputs(K.conclusion) == {0, 1}
    assert K.name == "deny"
    back = c.constraint_from_json(json.loads(json.dumps(c.constraint_to_json(K))), FEATS, OUTS)
    assert back.premise == K.premise and back.conclusion == K.conclusion


def test_json_decimal_strings_are_exact():
    K = c.constraint_from_json({"conclusion": {"cmp": "<=", "lhs": {"output": 0}, "rhs": "0.1"}}, FEATS, OUTS)
    assert K.conclusion.rhs == c.Constant(0.1)
    assert K.premise == c.TRUE


@pytest.mark.parametrize(
    "doc, msg",
    [
        ({"premise": True}, "conclusion"),
        ({"conclusion": {"exists": "x", "body": True}}, "quantifier"),
        ({"conclusion": {"forall": "x", "body": True}}, "quantifier"),
        ({"conclusion": {"cmp": "<", "lhs": {"feature": "salary"}, "rhs": 1}}, "salary"),
        ({"conclusion": {"cmp": "<", "lhs": {"output": 7}, "rhs": 1}}, "out of range"),
        ({"conclusion": {"frobnicate": []}}, "unknown formula"),
        ({"conclusion": {"cmp": "<", "lhs": {"output": 0}, "rhs": True}}, "malformed term"),
        (
            {"premise": {"cmp": ">", "lhs": {"output": "loan"}, "rhs": 0}, "conclusion": True},
            "premise",
        ),
    ],
)
def test_json_errors(doc, msg):
    with pytest.raises(c.ConstraintError, match=msg):
        c.constraint_from_json(doc, FEATS, OUTS)


def test_load_constraint(tmp_path):
    p = tmp_path / "k.json"
    p.write_text(json.dumps({"conclusion": {"exactly": 1, "of": [{"cmp": ">", "lhs": {"output": o}, "rhs": 0} for o in OUTS]}}))
    K = c.load_constraint(p, FEATS, OUTS)
    assert isinstance(K.conclusion, c.ExactlyK) and K.conclusion.k == 1


# rescaling ----------------------------------------------------------------


def test_rescaled_constant_comparison_is_folded():
    K = denial_constraint()
    raw = c.DomainConstraint(
        K.conclusion,
        c.conj(c.Compare(c.InputFeature(0), "<", c.Constant(5000.0)), c.Compare(c.Constant(0.0), "=", c.InputFeature(1))),
    )
    S = c.rescale(raw, [1000.0, 0.0], [10000.0, 1.0])
    a, b = S.premise.items
    assert a == c.Compare(c.InputFeature(0), "<", c.Constant(0.4))
    assert b == c.Compare(c.InputFeature(1), "=", c.Constant(0.0))


@settings(max_examples=60, deadline=None)
@given(
    lo=st.lists(st.floats(-100, 100), min_size=2, max_size=2),
    span=st.lists(st.floats(0.5, 100), min_size=2, max_size=2),
    olo=st.floats(-10, 10),
    ospan=st.floats(0.5, 10),
    seed=st.integers(0, 2**16),
)
def test_rescale_preserves_truth(lo, span, olo, ospan, seed):
    # sum of outputs <= feature0 + 2 * feature1 - 3, tested in raw and scaled units
    raw = c.DomainConstraint(
        c.Compare(
            c.add(c.OutputComponent(0), c.OutputComponent(1)),
            "<=",
            c.add(c.InputFeature(0), c.Scale(2.0, c.InputFeature(1)), c.Constant(-3.0)),
        ),
        c.Compare(c.InputFeature(1), ">", c.Constant(lo[1] + span[1] / 3)),
    )
    S = c.rescale(raw, lo, span, [olo, olo], [ospan, ospan])
    rng = np.random.default_rng(seed)
    Xs = rng.random((200, 2))
    Ys = rng.normal(0, 2, (200, 2))
    Xr = np.asarray(lo) + Xs * np.asarray(span)
    Yr = olo + Ys * ospan
    a, b = c.satisfied(raw, Xr, Yr), c.satisfied(S, Xs, Ys)
    # rounding may only disagree at numerical ties
    assert np.mean(a != b) <= 0.01


# agreement with the solver ------------------------------------------------


def _random_constraint(rng):
    atom_out = lambda: c.Compare(  # noqa: E731
        c.add(c.Scale(float(rng.normal()), c.OutputComponent(int(rng.integers(3)))), c.Constant(float(rng.normal()))),
        str(rng.choice(c.OPS[:2] + c.OPS[3:])),
        c.Scale(float(rng.normal()), c.InputFeature(int(rng.integers(2)))),
    )
    premise = c.Compare(c.InputFeature(0), "<", c.Constant(float(rng.random())))
    guard = c.IfPositiveThen(0, c.Constant(1.0), c.Constant(0.0))
    conclusion = c.Or(
        (
            c.And((atom_out(), c.Not(atom_out()))),
            c.ExactlyK((atom_out(), atom_out(), atom_out()), 1),
            c.Compare(c.add(guard, c.OutputComponent(1)), ">", c.Constant(0.5)),
        )
    )
    return c.DomainConstraint(conclusion, premise)


@pytest.mark.skipif(not HAVE_SOLVER, reason="needs an SMT solver")
def test_pointwise_matches_solver_on_1000_points(solver):
    rng = np.random.default_rng(5)
    mismatches = 0
    batch = 25
    for _ in range(1000 // batch):
        K = _random_constraint(rng)
        X = np.round(rng.random((batch, 2)), 3)
        Y = np.round(rng.normal(0, 1, (batch, 3)), 3)
        truth = c.satisfied(K, X, Y)
        # each ground formula is bound to a Boolean read back from one model
        sc = Script()
        flags = []
        for k, (x, y) in enumerate(zip(X, Y)):
            b = sc.declare(f"b_{k}", "Bool")
            sc.add(app("=", b, constraint_smt(K, lambda i: num(x[i]), lambda i: num(y[i]))))
            flags.append(b)
        res = solver.check(sc, bools=flags)
        assert isinstance(res, Sat)
        got = np.array([res.model[b] for b in flags])
        mismatches += int(np.sum(got != truth))
    assert mismatches == 0


@pytest.mark.skipif(not HAVE_SOLVER, reason="needs an SMT solver")
def test_negated_emission_is_complement(solver):
    K = denial_constraint()
    x, y = np.array([0.2, 0.0]), np.array([0.0, 1.0])
    for positive, expect in ((True, Unsat), (False, Sat)):
        sc = Script()
        sc.add(constraint_smt(K, lambda i: num(x[i]), lambda i: num(y[i]), positive=positive))
        assert isinstance(solver.check(sc), expect)
    assert app("<", "a", "b") == "(< a b)"
