"""Push an input box through hidden layers and turn a domain constraint into
a constraint on the last layer only.

Run: python3 demos/bounds_and_translation.py
"""

import numpy as np

from guardnet import constraints as c
from guardnet.intervals import BoundsBox, propagate
from guardnet.network import forward, init_standard
from guardnet.translation import translate

rng = np.random.default_rng(0)
net = init_standard(3, [6, 5], 2, skip_features=[0], seed=1)
box = BoundsBox.unit(3)

# interval bounds per layer, checked against 10^4 random inputs
bounds = propagate(net, box)
X = box.sample(10_000, rng)
trace = forward(net, X)
for i, b in enumerate(bounds):
    inside = b.contains(trace.inputs[i]).all() if i < len(trace.inputs) else True
    print(f"layer {i} input widths: {b.hi - b.lo}  all samples inside: {inside}")

# "if feature 0 exceeds 0.7 then output 0 must beat output 1"
K = c.constraint_from_json(
    {
        "premise": {"cmp": ">", "lhs": {"feature": "x0"}, "rhs": {"const": 0.7}},
        "conclusion": {"cmp": ">", "lhs": {"output": "deny"}, "rhs": {"output": "grant"}},
    },
    ["x0", "x1", "x2"],
    ["deny", "grant"],
).with_box(box)

kp = translate(K, net)
print("latent box lower:", np.round(kp.latent_box.lo, 3))
print("latent box upper:", np.round(kp.latent_box.hi, 3))
print("latent sub-box where the premise can hold:", [(r.lo.round(2).tolist(), r.hi.round(2).tolist()) for r in kp.regions])
print("last-layer variables:", kp.symbols)
