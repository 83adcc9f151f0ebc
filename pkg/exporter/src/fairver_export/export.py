"""Convert HDF5-saved dense ReLU classifiers into the portable text format.

The exporter understands sequential stacks of Dense layers (ReLU hidden
activations, sigmoid or softmax output, possibly as a separate Activation
layer) and refuses anything else by name: silently skipping a layer would
produce a portable model that disagrees with the source.

Attribute bounds come either from a dataset sample (per-column min/max, an
attribute counts as integer when every observed value is integral) or from
an explicit schema file; categorical inputs are expected to be
integer-encoded.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ExportError(Exception):
    """The model or schema cannot be exported; the message names the cause."""


class UnsupportedArchitectureError(ExportError):
    """The model contains a layer kind outside dense/ReLU territory."""


@dataclass(frozen=True)
class ExportManifest:
    """Record of one conversion: what mapped where, and what the schema
    bounds were derived from."""

    source_path: str
    out_path: str
    layer_map: tuple[tuple[str, int], ...]
    output_activation: str
    schema_source: str
    attribute_names: tuple[str, ...]

    def to_doc(self) -> dict:
        return {
            "source_path": self.source_path,
            "out_path": self.out_path,
            "layer_map": [[name, idx] for name, idx in self.layer_map],
            "output_activation": self.output_activation,
            "schema_source": self.schema_source,
            "attribute_names": list(self.attribute_names),
        }


def _activation_name(layer) -> str:
    act = getattr(layer, "activation", None)
    return getattr(act, "__name__", str(act) if act is not None else "linear")


def _extract_dense_stack(model):
    """Walk the layer list; returns (entries, output_activation) where each
    entry is (source_name, weights(out,in), biases, relu_flag)."""
    entries = []
    pending_output_act: str | None = None
    for layer in model.layers:
        kind = type(layer).__name__
        if kind == "InputLayer":
            continue
        if pending_output_act is not None:
            raise UnsupportedArchitectureError(
                f"layer {layer.name!r} follows the output activation"
            )
        if kind == "Dense":
            params = layer.get_weights()
            kernel = np.asarray(params[0], dtype=np.float64)
            bias = (
                np.asarray(params[1], dtype=np.float64)
                if len(params) > 1
                else np.zeros(kernel.shape[1], dtype=np.float64)
            )
            entries.append([layer.name, kernel.T, bias, _activation_name(layer)])
        elif kind in ("Activation", "ReLU"):
            act = "relu" if kind == "ReLU" else _activation_name(layer)
            if not entries:
                raise UnsupportedArchitectureError(
                    f"activation layer {layer.name!r} has no preceding dense layer"
                )
            if entries[-1][3] != "linear":
                raise UnsupportedArchitectureError(
                    f"layer {layer.name!r} stacks a second activation onto "
                    f"{entries[-1][0]!r}"
                )
            if act in ("sigmoid", "softmax"):
                pending_output_act = act
            elif act == "relu":
                entries[-1][3] = "relu"
            else:
                raise ExportError(
                    f"unsupported activation {act!r} on layer {layer.name!r}"
                )
        else:
            raise UnsupportedArchitectureError(
                f"unsupported layer type {kind!r} (layer {layer.name!r})"
            )
    if not entries:
        raise ExportError("model contains no dense layers")
    return entries, pending_output_act


def _load_model(model_path):
    try:
        import tensorflow as tf  # deferred: heavyweight import
    except ImportError as exc:
        raise ExportError(
            "reading .h5 models requires a Keras runtime "
            "(pip install 'fairver-export[framework]')"
        ) from exc
    try:
        return tf.keras.models.load_model(model_path, compile=False)
    except (OSError, ValueError) as exc:
        raise ExportError(f"cannot load model {model_path}: {exc}") from exc


def schema_from_csv(data_path) -> list[dict]:
    """Per-column bounds from a dataset sample (header row names the
    attributes; integer flag when every value is integral)."""
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ExportError(f"dataset {data_path} is empty") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ExportError(
                    f"dataset {data_path} line {lineno}: non-numeric value ({exc})"
                ) from None
    if not rows:
        raise ExportError(f"dataset {data_path} has no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[1] != len(header):
        raise ExportError("dataset rows do not match the header width")
    attrs = []
    for j, name in enumerate(header):
        col = data[:, j]
        attrs.append(
            {
                "name": name.strip(),
                "lb": float(col.min()),
                "ub": float(col.max()),
                "integer": bool(np.all(col == np.round(col))),
            }
        )
    return attrs


def _schema_from_file(schema_path) -> list[dict]:
    try:
        doc = json.loads(Path(schema_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ExportError(f"cannot read schema {schema_path}: {exc}") from exc
    attrs = doc.get("attributes") if isinstance(doc, dict) else None
    if not isinstance(attrs, list) or not attrs:
        raise ExportError("schema file must contain an 'attributes' list")
    out = []
    for k, e in enumerate(attrs):
        try:
            out.append(
                {
                    "name": str(e["name"]),
                    "lb": float(e["lb"]),
                    "ub": float(e["ub"]),
                    "integer": bool(e["integer"]),
                }
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ExportError(f"bad schema entry attributes[{k}]: {exc}") from exc
    return out


def export(
    model_path,
    out_path,
    data_path=None,
    schema_path=None,
) -> ExportManifest:
    """Convert one .h5 model; bounds come from ``data_path`` (CSV sample) or
    ``schema_path`` (JSON), exactly one of which is required."""
    if (data_path is None) == (schema_path is None):
        raise ExportError("provide exactly one of a dataset sample or a schema file")
    model = _load_model(model_path)
    entries, separate_out_act = _extract_dense_stack(model)

    output_activation = separate_out_act
    if output_activation is None:
        last_act = entries[-1][3]
        if last_act in ("sigmoid", "softmax"):
            output_activation = last_act
            entries[-1][3] = "linear"
        else:
            raise ExportError(
                f"output layer {entries[-1][0]!r} must end in sigmoid or "
                f"softmax, got {last_act!r}"
            )
    for name, _, _, act in entries[:-1]:
        if act != "relu":
            raise ExportError(f"hidden layer {name!r} must use relu, got {act!r}")
    if entries[-1][3] != "linear":
        raise ExportError(
            f"output layer {entries[-1][0]!r} carries activation "
            f"{entries[-1][3]!r} besides the output activation"
        )
    if output_activation == "sigmoid" and entries[-1][1].shape[0] != 1:
        raise ExportError("sigmoid output requires exactly one unit")

    attrs = schema_from_csv(data_path) if data_path else _schema_from_file(schema_path)
    input_arity = entries[0][1].shape[1]
    if len(attrs) != input_arity:
        raise ExportError(
            f"schema has {len(attrs)} attributes but the model takes "
            f"{input_arity} inputs"
        )

    doc = {
        "input_arity": input_arity,
        "output_activation": output_activation,
        "attributes": attrs,
        "layers": [
            {
                "activation": "relu" if k < len(entries) - 1 else "linear",
                "weights": w.tolist(),
                "biases": b.tolist(),
            }
            for k, (_, w, b, _) in enumerate(entries)
        ],
    }
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return ExportManifest(
        source_path=str(model_path),
        out_path=str(out_path),
        layer_map=tuple((name, k) for k, (name, *_rest) in enumerate(entries)),
        output_activation=output_activation,
        schema_source=str(data_path) if data_path else str(schema_path),
        attribute_names=tuple(a["name"] for a in attrs),
    )
