import json

import numpy as np
import pytest

from fairver.errors import (
    DimensionError,
    FormatError,
    InputError,
    UnsupportedModelError,
)
from fairver.model_io import (
    Activation,
    Attribute,
    AttributeSchema,
    Layer,
    Network,
    OutputActivation,
    canonical_text,
    classify,
    forward,
    forward_batch,
    load_network,
    load_portable,
    portable_doc,
    save_portable,
)

from util import make_int_schema, make_net


def _doc(layers, input_arity, out_act="sigmoid", attrs=None):
    if attrs is None:
        attrs = [
            {"name": f"a{i}", "lb": 0, "ub": 1, "integer": True}
            for i in range(input_arity)
        ]
    return {
        "input_arity": input_arity,
        "output_activation": out_act,
        "attributes": attrs,
        "layers": layers,
    }


def test_minimal_network_loads(tmp_path):
    doc = _doc([{"activation": "linear", "weights": [[2.0]], "biases": [0.0]}], 1)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    net = load_network(p)
    assert len(net.layers) == 1
    assert net.input_arity == 1
    assert net.output_arity == 1


def test_shape_mismatch_names_layer(tmp_path):
    doc = _doc(
        [
            {"activation": "relu", "weights": [[1, 0], [0, 1], [1, 1]], "biases": [0, 0, 0]},
            {
                "activation": "linear",
                "weights": [[1, 0, 0, 0]],
                "biases": [0],
            },
        ],
        2,
    )
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(DimensionError, match="layer 2"):
        load_network(p)


def test_round_trip_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    net = make_net([3, 4, 1], rng)
    schema = make_int_schema([(0, 5), (0, 5), (0, 5)])
    p = tmp_path / "m.json"
    save_portable(net, schema, p)
    first = p.read_bytes()
    net2, schema2 = load_portable(p)
    p2 = tmp_path / "m2.json"
    save_portable(net2, schema2, p2)
    assert p2.read_bytes() == first


def test_canonical_text_is_stable():
    rng = np.random.default_rng(1)
    net = make_net([2, 3, 1], rng)
    schema = make_int_schema([(0, 1), (0, 1)])
    assert canonical_text(portable_doc(net, schema)) == canonical_text(
        json.loads(canonical_text(portable_doc(net, schema)))
    )


def test_missing_field_named(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"input_arity": 1}))
    with pytest.raises(FormatError, match="output_activation"):
        load_network(p)


def test_nonfinite_rejected(tmp_path):
    doc = _doc([{"activation": "linear", "weights": [[float("nan")]], "biases": [0.0]}], 1)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc).replace("NaN", "NaN"))
    with pytest.raises(FormatError):
        load_network(p)


def test_hidden_layer_must_be_relu(tmp_path):
    doc = _doc(
        [
            {"activation": "linear", "weights": [[1.0]], "biases": [0.0]},
            {"activation": "linear", "weights": [[1.0]], "biases": [0.0]},
        ],
        1,
    )
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="relu"):
        load_network(p)


def test_sigmoid_needs_single_output(tmp_path):
    doc = _doc(
        [{"activation": "linear", "weights": [[1.0], [2.0]], "biases": [0.0, 0.0]}], 1
    )
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="sigmoid"):
        load_network(p)


def test_forward_identity_linear():
    net = Network(
        layers=(Layer(np.array([[1.0]]), np.array([0.0]), Activation.LINEAR),),
        input_arity=1,
        output_arity=1,
        output_activation=OutputActivation.NONE,
    )
    assert forward(net, [3.5]).tolist() == [3.5]


def test_forward_relu_inactive_branch():
    net = Network(
        layers=(Layer(np.array([[1.0, -1.0]]), np.array([0.0]), Activation.RELU),),
        input_arity=2,
        output_arity=1,
        output_activation=OutputActivation.NONE,
    )
    assert forward(net, [0.0, 1.0]).tolist() == [0.0]


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(42)
    net = make_net([13, 5, 1], rng)

    def naive(x):
        v = list(x)
        for layer in net.layers:
            out = []
            for i in range(layer.fan_out):
                s = float(layer.biases[i])
                for j in range(layer.fan_in):
                    s += float(layer.weights[i, j]) * v[j]
                if layer.activation is Activation.RELU:
                    s = max(0.0, s)
                out.append(s)
            v = out
        return np.array(v)

    for _ in range(100):
        x = rng.uniform(-5, 5, size=13)
        assert np.allclose(forward(net, x), naive(x), atol=1e-9)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    net = make_net([4, 6, 2], rng, output_activation=OutputActivation.SOFTMAX)
    x = rng.uniform(-1, 1, size=4)
    a = forward(net, x)
    b = forward(net, x)
    assert (a == b).all()


def test_forward_batch_matches_single():
    rng = np.random.default_rng(4)
    net = make_net([3, 5, 2], rng, output_activation=OutputActivation.SOFTMAX)
    xs = rng.uniform(-2, 2, size=(50, 3))
    batch = forward_batch(net, xs)
    for i in range(50):
        assert np.allclose(batch[i], forward(net, xs[i]), atol=0)


def test_forward_arity_error():
    rng = np.random.default_rng(5)
    net = make_net([3, 2, 1], rng)
    with pytest.raises(InputError):
        forward(net, [1.0, 2.0])


def test_classify_sigmoid_threshold():
    net = Network(
        layers=(Layer(np.array([[1.0]]), np.array([0.0]), Activation.LINEAR),),
        input_arity=1,
        output_arity=1,
        output_activation=OutputActivation.SIGMOID,
    )
    assert classify(net, [-1.0]) == 0
    assert classify(net, [2.0]) == 1
    assert classify(net, [0.0]) == 0  # boundary goes to the lower class
    # agrees with thresholding the sigmoid itself away from 0
    for y in [-3.0, -0.1, 0.1, 3.0]:
        sig = 1.0 / (1.0 + np.exp(-y))
        assert classify(net, [y]) == int(sig > 0.5)


def test_classify_softmax_argmax_and_tie():
    net = Network(
        layers=(
            Layer(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 0.0]), Activation.LINEAR),
        ),
        input_arity=2,
        output_arity=2,
        output_activation=OutputActivation.SOFTMAX,
    )
    assert classify(net, [2.0, 1.0]) == 0
    assert classify(net, [0.0, 3.0]) == 1
    assert classify(net, [1.0, 1.0]) == 0  # tie -> lower index


def test_classify_requires_output_activation():
    rng = np.random.default_rng(6)
    net = make_net([2, 2, 1], rng, output_activation=OutputActivation.NONE)
    with pytest.raises(UnsupportedModelError):
        classify(net, [0.0, 0.0])


def test_hidden_relu_exact():
    rng = np.random.default_rng(7)
    net = make_net([3, 4, 1], rng)
    x = rng.uniform(-1, 1, size=3)
    layer = net.layers[0]
    ws = layer.weights @ x + layer.biases
    post = np.maximum(ws, 0.0)
    v = forward(
        Network(
            layers=(layer,),
            input_arity=3,
            output_arity=4,
            output_activation=OutputActivation.NONE,
        ),
        x,
    )
    assert (v == post).all()


def test_schema_sampling_respects_domains():
    schema = AttributeSchema(
        (
            Attribute("i", -2, 3, True),
            Attribute("r", 0.5, 1.5, False),
        )
    )
    xs = schema.sample(np.random.default_rng(0), 500)
    assert ((xs[:, 0] >= -2) & (xs[:, 0] <= 3)).all()
    assert (xs[:, 0] == np.round(xs[:, 0])).all()
    assert ((xs[:, 1] >= 0.5) & (xs[:, 1] <= 1.5)).all()


def test_attribute_validation():
    with pytest.raises(FormatError):
        Attribute("bad", 2, 1, True)
    with pytest.raises(FormatError):
        Attribute("bad", 0.5, 1.5, True)
