import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")

import numpy as np
import pytest

tf = pytest.importorskip("tensorflow")


def build_model(spec, seed=0):
    """spec: (input_dim, hidden sizes, output units, output activation,
    separate_activation_layer)."""
    input_dim, hidden, out_units, out_act, separate = spec
    tf.keras.utils.set_random_seed(seed)
    layers = [tf.keras.layers.Input(shape=(input_dim,))]
    for i, h in enumerate(hidden):
        layers.append(tf.keras.layers.Dense(h, activation="relu", name=f"d{i}"))
    if separate:
        layers.append(tf.keras.layers.Dense(out_units, name="logits"))
        layers.append(tf.keras.layers.Activation(out_act, name="out"))
    else:
        layers.append(tf.keras.layers.Dense(out_units, activation=out_act, name="out"))
    return tf.keras.Sequential(layers)


@pytest.fixture(scope="session")
def architectures(tmp_path_factory):
    """Five saved models spanning depth, width, and both output styles."""
    root = tmp_path_factory.mktemp("models")
    specs = [
        (13, [64], 1, "sigmoid", True),
        (5, [16, 8], 1, "sigmoid", True),
        (4, [10, 10, 6], 1, "sigmoid", True),
        (6, [12], 2, "softmax", True),
        (3, [7, 5], 2, "softmax", True),
    ]
    out = []
    for i, spec in enumerate(specs):
        model = build_model(spec, seed=i)
        path = root / f"m{i}.h5"
        model.save(path)
        out.append((spec, path, model))
    return out
