"""Sound per-neuron pre-activation bounds over a box via interval arithmetic.

For each neuron the maximum of the weighted sum is obtained by pairing
positive weights with predecessor upper bounds and negative weights with
lower bounds (and symmetrically for the minimum); zero weights contribute
nothing either way and are grouped with the positives.  Propagation between
layers uses ReLU-clipped bounds ``(max(0, lb), max(0, ub))``.

All bounds are widened so they stay sound under 64-bit floating point: each
affine image gets slack ``(fan_in + 2) * u * S`` where ``u = 2**-53`` and
``S`` accumulates the absolute values of all terms, followed by one ulp
step outward.  The slack dominates the standard forward error bound of a
length-``fan_in`` fused dot product, including catastrophic-cancellation
cases where the result is tiny but intermediate terms are huge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .model_io import Activation, Network

UNIT_ROUNDOFF = 2.0**-53


@dataclass(frozen=True)
class RoundingPolicy:
    """Widening contract used for all floating-point bound computations."""

    description: str

    def slack(self, fan_in: int, magnitude) -> np.ndarray | float:
        """Allowed absolute widening for an affine image with the given
        accumulated absolute magnitude ``S = |W| @ max(|lo|,|ub|) + |b|``."""
        return (fan_in + 2) * UNIT_ROUNDOFF * np.asarray(magnitude, dtype=np.float64)


def directed_rounding_policy() -> RoundingPolicy:
    """The active widening contract: lower bounds only ever move down,
    upper bounds only ever move up, by at most ``slack`` plus one ulp."""
    return RoundingPolicy(
        description=(
            "per-affine-image widening by (fan_in + 2) * 2**-53 times the "
            "accumulated absolute magnitude, then one ulp outward"
        )
    )


def interval_affine(
    weights: np.ndarray,
    biases: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Widened interval image of ``W @ v + b`` for ``v`` in ``[lo, hi]``."""
    w_pos = np.maximum(weights, 0.0)
    w_neg = np.minimum(weights, 0.0)
    ub = w_pos @ hi + w_neg @ lo + biases
    lb = w_pos @ lo + w_neg @ hi + biases
    magnitude = np.abs(weights) @ np.maximum(np.abs(lo), np.abs(hi)) + np.abs(biases)
    slack = directed_rounding_policy().slack(weights.shape[1], magnitude)
    lb = np.nextafter(lb - slack, -np.inf)
    ub = np.nextafter(ub + slack, np.inf)
    return lb, ub


@dataclass(frozen=True)
class NeuronBounds:
    """Pre-activation bounds per layer; layer 0 of ``pre`` is the first
    affine layer, input bounds are stored separately."""

    input_lo: np.ndarray
    input_hi: np.ndarray
    pre: tuple[tuple[np.ndarray, np.ndarray], ...]

    def post(self, layer_index: int, activation: Activation) -> tuple[np.ndarray, np.ndarray]:
        lb, ub = self.pre[layer_index]
        if activation is Activation.RELU:
            return np.maximum(lb, 0.0), np.maximum(ub, 0.0)
        return lb, ub

    def predecessor(self, net: Network, layer_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounds on the values feeding layer ``layer_index``."""
        if layer_index == 0:
            return self.input_lo, self.input_hi
        return self.post(layer_index - 1, net.layers[layer_index - 1].activation)


def neuron_bounds(net: Network, box: Sequence[tuple[float, float]]) -> NeuronBounds:
    """Sound bounds for every neuron's weighted sum over the given input box."""
    if len(box) != net.input_arity:
        raise InputError(
            f"box has {len(box)} attributes, network expects {net.input_arity}"
        )
    lo = np.array([b[0] for b in box], dtype=np.float64)
    hi = np.array([b[1] for b in box], dtype=np.float64)
    if np.any(lo > hi):
        raise InputError("box has an empty interval (lo > hi)")
    pre = []
    for layer in net.layers:
        lb, ub = interval_affine(layer.weights, layer.biases, lo, hi)
        pre.append((lb, ub))
        if layer.activation is Activation.RELU:
            lo, hi = np.maximum(lb, 0.0), np.maximum(ub, 0.0)
        else:
            lo, hi = lb, ub
    return NeuronBounds(
        input_lo=np.array([b[0] for b in box], dtype=np.float64),
        input_hi=np.array([b[1] for b in box], dtype=np.float64),
        pre=tuple(pre),
    )


def bounds_table(net: Network, nb: NeuronBounds) -> list[list[tuple[float, float]]]:
    """Per-layer list of (lb, ub) pairs, for report dumps."""
    return [
        [(float(lb[i]), float(ub[i])) for i in range(lb.shape[0])]
        for lb, ub in nb.pre
    ]
