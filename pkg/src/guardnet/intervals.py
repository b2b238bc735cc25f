"""Interval propagation of an input box through the network.

Each neuron's bound takes the lower input endpoint where its weight is
non-negative and the upper endpoint otherwise; the activation is then applied
to both ends, which is valid for monotone non-decreasing activations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .network import LayerParams, Network


class BoundsOverflow(ArithmeticError):
    """Propagated bounds stopped being finite."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


class BoundsBox:
    """Axis-parallel box stored as two arrays."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.array(lo, dtype=np.float64).reshape(-1)
        hi = np.array(hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("box needs matching, nonempty endpoint arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise BoundsOverflow("box endpoints must be finite")
        if np.any(lo > hi):
            raise ValueError("box has an empty dimension")
        self.lo, self.hi = lo, hi

    @classmethod
    def from_intervals(cls, dims: Sequence[Interval]) -> "BoundsBox":
        return cls([d.lo for d in dims], [d.hi for d in dims])

    @classmethod
    def unit(cls, n: int) -> "BoundsBox":
        return cls(np.zeros(n), np.ones(n))

    def __len__(self) -> int:
        return self.lo.size

    def __iter__(self) -> Iterator[Interval]:
        for a, b in zip(self.lo, self.hi):
            yield Interval(float(a), float(b))

    def __getitem__(self, i) -> Interval:
        return Interval(float(self.lo[i]), float(self.hi[i]))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BoundsBox)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __repr__(self) -> str:
        return f"BoundsBox(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    def contains(self, x) -> np.ndarray:
        """Row-wise membership for a point or a batch of points."""
        x = np.asarray(x, dtype=np.float64)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def includes(self, other: "BoundsBox") -> bool:
        return bool(np.all(self.lo <= other.lo) and np.all(other.hi <= self.hi))

    def inflate(self, eps: float) -> "BoundsBox":
        return BoundsBox(self.lo - eps, self.hi + eps)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, len(self)))


def affine_layer_bounds(box: BoundsBox, layer: LayerParams) -> BoundsBox:
    W = layer.weights
    if len(box) != W.shape[0]:
        raise ValueError(f"box has {len(box)} dims, layer expects {W.shape[0]}")
    pos = W >= 0
    # explicit sign split mirrors the endpoint-selection rule exactly
    with np.errstate(over="ignore", invalid="ignore"):
        lo = layer.bias + np.where(pos, W * box.lo[:, None], W * box.hi[:, None]).sum(axis=0)
        hi = layer.bias + np.where(pos, W * box.hi[:, None], W * box.lo[:, None]).sum(axis=0)
    lo, hi = layer.activation(lo), layer.activation(hi)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise BoundsOverflow("non-finite bound while propagating through a layer")
    return BoundsBox(lo, hi)


def propagate(net: Network, input_box: BoundsBox, eps: float = 0.0) -> list[BoundsBox]:
    """Boxes for the input of every layer; the last entry is the latent box.

    Skip dimensions of the latent box are the input intervals copied as-is.
    ``eps`` inflates every propagated box (not the input box).
    """
    if len(input_box) != net.input_dim:
        raise ValueError(f"input box has {len(input_box)} dims, network expects {net.input_dim}")
    boxes = [input_box]
    box = input_box
    for layer in net.layers[:-1]:
        box = affine_layer_bounds(box, layer)
        if eps:
            box = box.inflate(eps)
        boxes.append(box)
    skip = list(net.skip_features)
    latent = BoundsBox(
        np.concatenate([box.lo, input_box.lo[skip]]),
        np.concatenate([box.hi, input_box.hi[skip]]),
    )
    boxes[-1] = latent
    return boxes


def latent_box(net: Network, input_box: BoundsBox, eps: float = 0.0) -> BoundsBox:
    return propagate(net, input_box, eps)[-1]
