"""Portable trained-network representation: load/save, forward pass, classification.

A network is a sequence of affine layers, each followed by an activation.
Hidden layers use ReLU, the final layer is stored linear; a sigmoid or
softmax applied to the final logits exists only as metadata
(``output_activation``) consumed by the query machinery and by
:func:`classify`.  The on-disk format is a canonical JSON document so that
models round-trip byte-identically and every real survives with full
64-bit precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionError,
    FormatError,
    InputError,
    UnsupportedModelError,
)


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"


class OutputActivation(str, Enum):
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    NONE = "none"


@dataclass(frozen=True)
class Layer:
    """One affine layer: ``a = act(W @ prev + b)``.

    ``weights`` has shape (fan_out, fan_in); ``biases`` has shape (fan_out,).
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: Activation

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"layer weights must be a matrix, got ndim={w.ndim}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise DimensionError(
                f"bias length {b.shape} does not match weight rows {w.shape[0]}"
            )
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Attribute:
    """One input attribute with its domain interval.

    ``integer`` marks attributes whose valid values are the integers in
    [lb, ub]; categorical attributes are expected to be integer-encoded.
    """

    name: str
    lb: float
    ub: float
    integer: bool

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lb) and np.isfinite(self.ub)):
            raise FormatError(f"attribute {self.name!r}: bounds must be finite")
        if self.lb > self.ub:
            raise FormatError(
                f"attribute {self.name!r}: lb {self.lb} exceeds ub {self.ub}"
            )
        if self.integer and not (
            float(self.lb).is_integer() and float(self.ub).is_integer()
        ):
            raise FormatError(
                f"attribute {self.name!r}: integer attribute with non-integer bounds"
            )


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered input attributes; order matches the network's input order."""

    attributes: tuple[Attribute, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise FormatError("attribute names must be unique")

    def __len__(self) -> int:
        return len(self.attributes)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def lower_bounds(self) -> np.ndarray:
        return np.array([a.lb for a in self.attributes], dtype=np.float64)

    def upper_bounds(self) -> np.ndarray:
        return np.array([a.ub for a in self.attributes], dtype=np.float64)

    def integer_mask(self) -> np.ndarray:
        return np.array([a.integer for a in self.attributes], dtype=bool)

    def box(self) -> tuple[tuple[float, float], ...]:
        return tuple((a.lb, a.ub) for a in self.attributes)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform valid inputs, one row per sample (integers for flagged attributes)."""
        cols = []
        for a in self.attributes:
            if a.integer:
                cols.append(rng.integers(int(a.lb), int(a.ub) + 1, size=size).astype(np.float64))
            else:
                cols.append(rng.uniform(a.lb, a.ub, size=size))
        return np.column_stack(cols)


@dataclass(frozen=True)
class Network:
    """A trained fully-connected network plus output-activation metadata."""

    layers: tuple[Layer, ...]
    input_arity: int
    output_arity: int
    output_activation: OutputActivation

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise DimensionError("network must contain at least one layer")
        if self.layers[0].fan_in != self.input_arity:
            raise DimensionError(
                f"layer 1 expects {self.layers[0].fan_in} inputs, "
                f"input_arity is {self.input_arity}"
            )
        for i in range(1, len(self.layers)):
            if self.layers[i].fan_in != self.layers[i - 1].fan_out:
                raise DimensionError(
                    f"dimension mismatch at layer {i + 1}: expects "
                    f"{self.layers[i].fan_in} inputs but layer {i} "
                    f"produces {self.layers[i - 1].fan_out}"
                )
        if self.layers[-1].fan_out != self.output_arity:
            raise DimensionError(
                f"last layer produces {self.layers[-1].fan_out} outputs, "
                f"output_arity is {self.output_arity}"
            )
        for i, layer in enumerate(self.layers):
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.biases).all()):
                raise FormatError(f"layer {i + 1} contains non-finite weights or biases")

    @property
    def hidden_layer_count(self) -> int:
        return len(self.layers) - 1

    @property
    def hidden_neuron_count(self) -> int:
        return sum(l.fan_out for l in self.layers[:-1])

    def hidden_ids(self) -> list[tuple[int, int]]:
        """(layer_index, neuron_index) for every hidden neuron, layer-major."""
        return [
            (li, ni)
            for li in range(len(self.layers) - 1)
            for ni in range(self.layers[li].fan_out)
        ]


def forward(net: Network, x: Sequence[float]) -> np.ndarray:
    """Evaluate the network on one input; returns the raw output logits.

    The stored per-layer activations are applied; ``output_activation`` is not.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != net.input_arity:
        raise InputError(
            f"expected input of length {net.input_arity}, got shape {v.shape}"
        )
    for layer in net.layers:
        v = layer.weights @ v + layer.biases
        if layer.activation is Activation.RELU:
            v = np.maximum(v, 0.0)
    return v


def forward_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Evaluate a batch (rows are inputs); returns one logits row per input."""
    a = np.asarray(xs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_arity:
        raise InputError(
            f"expected batch of shape (n, {net.input_arity}), got {a.shape}"
        )
    for layer in net.layers:
        a = a @ layer.weights.T + layer.biases
        if layer.activation is Activation.RELU:
            a = np.maximum(a, 0.0)
    return a


def classify_logits(kind: OutputActivation, y: np.ndarray) -> int:
    """Class label implied by raw logits under the given output activation.

    Sigmoid: label 1 iff y > 0 (sigmoid is monotone with value 0.5 at 0).
    Softmax: argmax.  Exact ties resolve to the lower class index.
    """
    if kind is OutputActivation.SIGMOID:
        return 1 if float(y[0]) > 0.0 else 0
    if kind is OutputActivation.SOFTMAX:
        return int(np.argmax(y))
    raise UnsupportedModelError(
        "classification requires a sigmoid or softmax output activation"
    )


def classify(net: Network, x: Sequence[float]) -> int:
    return classify_logits(net.output_activation, forward(net, x))


def classify_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    ys = forward_batch(net, xs)
    if net.output_activation is OutputActivation.SIGMOID:
        return (ys[:, 0] > 0.0).astype(np.int64)
    if net.output_activation is OutputActivation.SOFTMAX:
        return np.argmax(ys, axis=1)
    raise UnsupportedModelError(
        "classification requires a sigmoid or softmax output activation"
    )


# ---------------------------------------------------------------------------
# Portable on-disk format


def _require(doc: dict, field: str, where: str = "document"):
    if field not in doc:
        raise FormatError(f"missing field {field!r} in {where}")
    return doc[field]


def _schema_from_obj(entries, where: str = "attributes") -> AttributeSchema:
    if not isinstance(entries, list):
        raise FormatError(f"field {where!r} must be a list")
    attrs = []
    for k, e in enumerate(entries):
        try:
            attrs.append(
                Attribute(
                    name=str(_require(e, "name", f"{where}[{k}]")),
                    lb=float(_require(e, "lb", f"{where}[{k}]")),
                    ub=float(_require(e, "ub", f"{where}[{k}]")),
                    integer=bool(_require(e, "integer", f"{where}[{k}]")),
                )
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad attribute entry {where}[{k}]: {exc}") from exc
    return AttributeSchema(tuple(attrs))


def _schema_to_obj(schema: AttributeSchema) -> list[dict]:
    return [
        {"name": a.name, "lb": a.lb, "ub": a.ub, "integer": a.integer}
        for a in schema.attributes
    ]


def _network_from_doc(doc: dict) -> Network:
    input_arity = int(_require(doc, "input_arity"))
    out_act_raw = _require(doc, "output_activation")
    try:
        out_act = OutputActivation(out_act_raw)
    except ValueError:
        raise FormatError(
            f"field 'output_activation' must be one of "
            f"{[m.value for m in OutputActivation]}, got {out_act_raw!r}"
        ) from None
    layers_doc = _require(doc, "layers")
    if not isinstance(layers_doc, list) or not layers_doc:
        raise FormatError("field 'layers' must be a non-empty list")
    layers = []
    for k, entry in enumerate(layers_doc):
        act_raw = _require(entry, "activation", f"layers[{k}]")
        try:
            act = Activation(act_raw)
        except ValueError:
            raise FormatError(
                f"layers[{k}]: activation must be one of "
                f"{[m.value for m in Activation]}, got {act_raw!r}"
            ) from None
        w = _require(entry, "weights", f"layers[{k}]")
        b = _require(entry, "biases", f"layers[{k}]")
        try:
            weights = np.array(w, dtype=np.float64)
            biases = np.array(b, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"layers[{k}]: non-numeric weights or biases") from exc
        if weights.ndim != 2:
            raise DimensionError(
                f"dimension error at layer {k + 1}: weights must be a "
                f"rectangular matrix, got ndim={weights.ndim}"
            )
        try:
            layers.append(Layer(weights=weights, biases=biases, activation=act))
        except DimensionError as exc:
            raise DimensionError(f"dimension error at layer {k + 1}: {exc}") from None
    for k, layer in enumerate(layers[:-1]):
        if layer.activation is not Activation.RELU:
            raise FormatError(f"layers[{k}]: hidden layers must use relu")
    if layers[-1].activation is not Activation.LINEAR:
        raise FormatError("the final layer must be stored linear")
    if out_act is OutputActivation.SIGMOID and layers[-1].fan_out != 1:
        raise FormatError("sigmoid output activation requires exactly one output")
    # Cross-layer shape check here so the error names the offending layer.
    for k in range(1, len(layers)):
        if layers[k].fan_in != layers[k - 1].fan_out:
            raise DimensionError(
                f"dimension error at layer {k + 1}: expects {layers[k].fan_in} "
                f"inputs but layer {k} produces {layers[k - 1].fan_out}"
            )
    return Network(
        layers=tuple(layers),
        input_arity=input_arity,
        output_arity=layers[-1].fan_out,
        output_activation=out_act,
    )


def _load_doc(path) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a valid JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("top-level value must be an object")
    return doc


def load_portable(path) -> tuple[Network, AttributeSchema]:
    """Load a portable model file; returns the network and its attribute schema."""
    doc = _load_doc(path)
    net = _network_from_doc(doc)
    schema = _schema_from_obj(_require(doc, "attributes"))
    if len(schema) != net.input_arity:
        raise FormatError(
            f"schema lists {len(schema)} attributes but input_arity is "
            f"{net.input_arity}"
        )
    return net, schema


def load_network(path) -> Network:
    return load_portable(path)[0]


def load_schema(path) -> AttributeSchema:
    """Load the attribute schema from a portable model file or a bare schema file."""
    doc = _load_doc(path)
    return _schema_from_obj(_require(doc, "attributes"))


def portable_doc(net: Network, schema: AttributeSchema) -> dict:
    return {
        "input_arity": net.input_arity,
        "output_activation": net.output_activation.value,
        "attributes": _schema_to_obj(schema),
        "layers": [
            {
                "activation": layer.activation.value,
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
            }
            for layer in net.layers
        ],
    }


def canonical_text(doc: dict) -> str:
    """Canonical serialized form: stable key order, full float round-trip."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_portable(net: Network, schema: AttributeSchema, path) -> None:
    if len(schema) != net.input_arity:
        raise FormatError(
            f"schema lists {len(schema)} attributes but input_arity is "
            f"{net.input_arity}"
        )
    Path(path).write_text(canonical_text(portable_doc(net, schema)))


def save_schema(schema: AttributeSchema, path) -> None:
    Path(path).write_text(canonical_text({"attributes": _schema_to_obj(schema)}))
