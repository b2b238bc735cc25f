"""Feedforward network with skip-copied input features.

The last layer is affine and receives the activations of the penultimate
layer followed by a verbatim copy of the designated input features. The
trainer moves the hidden layers by gradient descent and installs last-layer
parameters found by the solver, so the two are kept as separate primitives.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class Activation(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return (z > 0).astype(np.float64)
        return np.ones_like(z)


class TaskKind(str, enum.Enum):
    REGRESSION = "regression"
    BINARY = "binary"
    MULTICLASS = "multiclass"
    MULTILABEL = "multilabel"


class ArchitectureError(ValueError):
    pass


@dataclass
class LayerParams:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LayerParams":
        return LayerParams(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    """Layers ``h_1 .. h_k``; ``skip_features`` are appended after ``h_{k-1}``."""

    layers: list[LayerParams]
    skip_features: tuple[int, ...] = ()
    input_dim: int = field(default=-1)

    def __post_init__(self):
        if self.input_dim < 0:
            self.input_dim = self.layers[0].fan_in
        self.skip_features = tuple(int(i) for i in self.skip_features)
        _check_structure(self)

    @property
    def k(self) -> int:
        return len(self.layers)

    @property
    def hidden_width(self) -> int:
        """Trained units feeding the last layer."""
        return self.layers[-2].fan_out

    @property
    def latent_dim(self) -> int:
        return self.layers[-1].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def last(self) -> LayerParams:
        return self.layers[-1]

    def skip_slot(self, feature: int) -> int:
        """Latent index at which input ``feature`` is copied."""
        return self.hidden_width + self.skip_features.index(feature)

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers], self.skip_features, self.input_dim)

    def predict(self, X) -> np.ndarray:
        return forward(self, X).output

    def latent(self, X) -> np.ndarray:
        return forward(self, X).inputs[-1]

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "skip_features": list(self.skip_features),
            "layers": [
                {
                    "fan_in": l.fan_in,
                    "fan_out": l.fan_out,
                    "activation": l.activation.value,
                    "weights": [[_fmt(v) for v in row] for row in l.weights],
                    "bias": [_fmt(v) for v in l.bias],
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        layers = []
        for d in doc["layers"]:
            W = np.array([[float(v) for v in row] for row in d["weights"]], dtype=np.float64)
            W = W.reshape(int(d["fan_in"]), int(d["fan_out"]))
            b = np.array([float(v) for v in d["bias"]], dtype=np.float64)
            layers.append(LayerParams(W, b, Activation(d["activation"])))
        return cls(layers, tuple(doc.get("skip_features", ())), int(doc["input_dim"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _check_structure(net: Network) -> None:
    if len(net.layers) < 2:
        raise ArchitectureError("a network needs at least one hidden layer and an output layer")
    for s in net.skip_features:
        if not 0 <= s < net.input_dim:
            raise ArchitectureError(f"skip feature index {s} out of range for {net.input_dim} inputs")
    if len(set(net.skip_features)) != len(net.skip_features):
        raise ArchitectureError("duplicate skip feature index")
    if net.layers[0].fan_in != net.input_dim:
        raise ArchitectureError("first layer fan-in does not match input width")
    for a, b in zip(net.layers[:-2], net.layers[1:-1]):
        if a.fan_out != b.fan_in:
            raise ArchitectureError("adjacent hidden layers have inconsistent shapes")
    if net.layers[-1].fan_in != net.layers[-2].fan_out + len(net.skip_features):
        raise ArchitectureError("last layer fan-in must equal hidden width plus skip count")
    if net.layers[-1].activation is not Activation.IDENTITY:
        raise ArchitectureError("the output layer must be affine")
    for l in net.layers:
        if l.bias.shape != (l.fan_out,):
            raise ArchitectureError("bias length does not match fan-out")
        if min(l.weights.shape) == 0:
            raise ArchitectureError("zero-width layer")


def init_standard(
    input_dim: int,
    hidden: Sequence[int],
    output_dim: int,
    skip_features: Sequence[int] = (),
    seed: int = 0,
    activation: Activation | str = Activation.RELU,
) -> Network:
    """He fan-in normal initialisation with zero biases."""
    activation = Activation(activation)
    sizes = [input_dim, *hidden]
    if len(hidden) < 1 or min([*sizes, output_dim]) < 1:
        raise ArchitectureError(f"invalid layer sizes {sizes + [output_dim]}")
    for s in skip_features:
        if not 0 <= int(s) < input_dim:
            raise ArchitectureError(f"skip feature index {s} out of range for {input_dim} inputs")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append(LayerParams(W, np.zeros(fan_out), activation))
    fan_in = sizes[-1] + len(skip_features)
    W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, output_dim))
    layers.append(LayerParams(W, np.zeros(output_dim), Activation.IDENTITY))
    return Network(layers, tuple(skip_features), input_dim)


@dataclass
class Trace:
    """``inputs[n]`` is the input of layer n+1; ``pre[n]`` its pre-activation."""

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    output: np.ndarray


def forward(net: Network, x) -> Trace:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} input features, got {X.shape[1]}")
    inputs, pre = [X], []
    h = X
    for n, layer in enumerate(net.layers):
        z = h @ layer.weights + layer.bias
        pre.append(z)
        h = layer.activation(z)
        if n == net.k - 2:
            h = np.concatenate([h, X[:, list(net.skip_features)]], axis=1)
        if n < net.k - 1:
            inputs.append(h)
    if single:
        return Trace([a[0] for a in inputs], [z[0] for z in pre], h[0])
    return Trace(inputs, pre, h)


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def last(self) -> tuple[np.ndarray, np.ndarray]:
        return self.weights[-1], self.biases[-1]


def loss_and_grad_output(out: np.ndarray, y: np.ndarray, task: TaskKind) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. the raw outputs."""
    task = TaskKind(task)
    B, O = out.shape
    if task is TaskKind.REGRESSION:
        y = np.asarray(y, dtype=np.float64).reshape(B, -1)
        if y.shape != out.shape:
            raise ValueError("label shape does not match network output")
        r = out - y
        return float(np.mean(r**2)), 2.0 * r / r.size
    if task is TaskKind.MULTILABEL or (task is TaskKind.BINARY and O == 1):
        y = np.asarray(y, dtype=np.float64).reshape(B, -1)
        if y.shape != out.shape:
            raise ValueError("label shape does not match network output")
        # logistic loss on logits, summed over outputs
        loss = np.logaddexp(0.0, out) - y * out
        p = 0.5 * (1.0 + np.tanh(0.5 * out))
        return float(loss.sum() / B), (p - y) / B
    # softmax cross-entropy (multiclass, or binary with one logit per class)
    y = np.asarray(y).reshape(-1).astype(int)
    if y.shape[0] != B or y.min() < 0 or y.max() >= O:
        raise ValueError("class labels do not match network output")
    m = out.max(axis=1, keepdims=True)
    logz = m[:, 0] + np.log(np.exp(out - m).sum(axis=1))
    loss = float(np.mean(logz - out[np.arange(B), y]))
    p = np.exp(out - logz[:, None])
    p[np.arange(B), y] -= 1.0
    return loss, p / B


def backward(net: Network, X, y, task: TaskKind | str) -> tuple[float, GradientSet]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    tr = forward(net, X)
    loss, delta = loss_and_grad_output(tr.output, y, TaskKind(task))
    gW = [None] * net.k
    gb = [None] * net.k
    for n in range(net.k - 1, -1, -1):
        layer = net.layers[n]
        delta = delta * layer.activation.derivative(tr.pre[n])
        gW[n] = tr.inputs[n].T @ delta
        gb[n] = delta.sum(axis=0)
        if n > 0:
            up = delta @ layer.weights.T
            if n == net.k - 1:
                up = up[:, : net.hidden_width]  # skip slots carry no trainable path
            delta = up
    return loss, GradientSet(gW, gb)


def apply_hidden_step(net: Network, grads: GradientSet, eta: float) -> Network:
    """Gradient step on layers ``1..k-1``; the output layer is left untouched."""
    out = net.copy()
    for n in range(net.k - 1):
        out.layers[n].weights = net.layers[n].weights - eta * grads.weights[n]
        out.layers[n].bias = net.layers[n].bias - eta * grads.biases[n]
    return out


def apply_full_step(net: Network, grads: GradientSet, eta: float) -> Network:
    out = apply_hidden_step(net, grads, eta)
    out.layers[-1].weights = net.last.weights - eta * grads.weights[-1]
    out.layers[-1].bias = net.last.bias - eta * grads.biases[-1]
    return out


def set_last_layer(net: Network, weights, bias) -> Network:
    W = np.array(weights, dtype=np.float64)
    b = np.array(bias, dtype=np.float64)
    if W.shape != net.last.weights.shape or b.shape != net.last.bias.shape:
        raise ValueError(
            f"last layer expects weights {net.last.weights.shape} and bias {net.last.bias.shape}"
        )
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
        raise ValueError("last-layer values must be finite")
    out = net.copy()
    out.layers[-1] = LayerParams(W, b, Activation.IDENTITY)
    return out


def last_layer_vector(net: Network) -> np.ndarray:
    """Flattened ``[W (row-major), b]`` in the solver's parameter order."""
    return np.concatenate([net.last.weights.ravel(), net.last.bias])


def split_last_layer(net: Network, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    L, O = net.last.weights.shape
    theta = np.asarray(theta, dtype=np.float64)
    return theta[: L * O].reshape(L, O), theta[L * O :]
