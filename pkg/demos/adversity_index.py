"""Adversity index on three hand-placed points.

The model is f(x) = relu(x) and the rule is "output at most 0.8". All three
points satisfy the rule, but only x = 0.75 has a violating neighbour within
distance 0.1, so the index is 1/3.

Requires an SMT solver (z3) on PATH.
Run: python3 demos/adversity_index.py
"""

import numpy as np

from guardnet import constraints as c
from guardnet.intervals import BoundsBox
from guardnet.network import Activation, LayerParams, Network
from guardnet.smt.solver import Solver
from guardnet.verify import adversity_index, constraint_accuracy

net = Network(
    [
        LayerParams(np.array([[1.0]]), np.array([0.0]), Activation.RELU),
        LayerParams(np.array([[1.0]]), np.array([0.0]), Activation.IDENTITY),
    ],
    (),
    1,
)
K = c.DomainConstraint(c.Compare(c.OutputComponent(0), "<=", c.Constant(0.8)), input_box=BoundsBox.unit(1))
X = np.array([[0.1], [0.4], [0.75]])

print("constraint accuracy:", constraint_accuracy(net, X, K))
res = adversity_index(net, X, K, 0.1, Solver())
print("verdicts:", res.verdicts)
print("AdI:", res.adi)
