"""Shared builders for tests: random networks, schemas, and tiny instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fairver.model_io import (
    Activation,
    Attribute,
    AttributeSchema,
    Layer,
    Network,
    OutputActivation,
)
from fairver.query import FairnessQuery


def make_net(
    sizes: list[int],
    rng: np.random.Generator,
    output_activation: OutputActivation = OutputActivation.SIGMOID,
    weight_scale: float = 1.0,
    bias_shift: float = 0.0,
) -> Network:
    """Random fully-connected net; ``sizes`` is [inputs, hidden..., outputs]."""
    layers = []
    for k in range(1, len(sizes)):
        fan_in, fan_out = sizes[k - 1], sizes[k]
        w = rng.normal(0.0, weight_scale / np.sqrt(fan_in), size=(fan_out, fan_in))
        b = rng.normal(bias_shift, 0.5, size=fan_out)
        act = Activation.LINEAR if k == len(sizes) - 1 else Activation.RELU
        layers.append(Layer(weights=w, biases=b, activation=act))
    return Network(
        layers=tuple(layers),
        input_arity=sizes[0],
        output_arity=sizes[-1],
        output_activation=output_activation,
    )


def make_int_schema(ranges: list[tuple[int, int]], prefix: str = "a") -> AttributeSchema:
    return AttributeSchema(
        tuple(
            Attribute(name=f"{prefix}{i}", lb=float(lo), ub=float(hi), integer=True)
            for i, (lo, hi) in enumerate(ranges)
        )
    )


def make_real_schema(ranges: list[tuple[float, float]], prefix: str = "r") -> AttributeSchema:
    return AttributeSchema(
        tuple(
            Attribute(name=f"{prefix}{i}", lb=float(lo), ub=float(hi), integer=False)
            for i, (lo, hi) in enumerate(ranges)
        )
    )


@dataclass
class TinyInstance:
    """A small verification problem an exhaustive oracle can decide."""

    net: Network
    schema: AttributeSchema
    query: FairnessQuery


def random_tiny_instance(rng: np.random.Generator, with_epsilon: bool = False) -> TinyInstance:
    """Random instance with <= 3 hidden layers, <= 8 neurons/layer, and an
    integer grid of at most a few thousand points."""
    n_attrs = int(rng.integers(2, 4))
    ranges = []
    budget = 2000
    for _ in range(n_attrs):
        span = int(rng.integers(1, 10))
        span = min(span, max(1, budget))
        lo = int(rng.integers(-3, 4))
        ranges.append((lo, lo + span))
        budget //= span + 1
    schema = make_int_schema(ranges)
    depth = int(rng.integers(1, 4))
    # two-copy queries over three wide hidden layers routinely stall solvers;
    # keep deep samples narrow so the suite exercises depth without burning
    # its whole budget on timeouts
    max_width = 9 if depth < 3 else 7
    hidden = [int(rng.integers(1, max_width)) for _ in range(depth)]
    out_act = OutputActivation.SIGMOID if rng.random() < 0.6 else OutputActivation.SOFTMAX
    m = 1 if out_act is OutputActivation.SIGMOID else 2
    net = make_net(
        [n_attrs, *hidden, m],
        rng,
        output_activation=out_act,
        weight_scale=float(rng.uniform(0.5, 2.0)),
    )
    protected = int(rng.integers(0, n_attrs))
    epsilon = {}
    if with_epsilon:
        others = [i for i in range(n_attrs) if i != protected]
        pick = int(rng.choice(others))
        epsilon[pick] = float(rng.integers(1, 3))
    ms = int(rng.choice([3, 5, 8, 100]))
    query = FairnessQuery(
        protected=(protected,),
        epsilon=epsilon,
        soft_timeout_s=20.0,
        hard_timeout_s=600.0,
        max_attribute_size=ms,
    )
    return TinyInstance(net=net, schema=schema, query=query)
