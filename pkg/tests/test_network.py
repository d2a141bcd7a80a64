import numpy as np
import pytest

from actensemble.ensemble import EnsembleLayer
from actensemble.layers import BatchNorm, Flatten, ReLU
from actensemble.network import ConvSpec, DenseSpec, Network, PoolSpec, SpecError, parse_spec

from conftest import numeric_grad, rel_error


def test_parse_ffn():
    spec = parse_spec("1000f-1000f-1000f-10f")
    assert spec.layers == [DenseSpec(1000)] * 3 + [DenseSpec(10)]


def test_parse_cnn():
    spec = parse_spec("(128)5c-2p-(128)3c-2p-(128)3c-2p-1000f-1000f-10f")
    assert spec.layers[:2] == [ConvSpec(128, 5), PoolSpec(2)]
    assert len(spec.layers) == 9


@pytest.mark.parametrize("text", ["32f-10f", "(16)3c-2p-(16)3c-2p-400f-10f", "(8)5c-3p-10f"])
def test_roundtrip(text):
    assert str(parse_spec(text)) == text


@pytest.mark.parametrize("text, pos", [("32f-x-10f", 4), ("32f--10f", 4), ("32f 10f", 3),
                                       ("(16c-10f", 0)])
def test_malformed_reports_position(text, pos):
    with pytest.raises(SpecError, match=f"position {pos}"):
        parse_spec(text)


@pytest.mark.parametrize("text", ["", "   ", "32f-2p", "0f-10f", "32f-10f"])
def test_other_spec_errors(text):
    with pytest.raises(SpecError):
        if text == "32f-10f":
            parse_spec(text, mode="set9")
        parse_spec(text)


def test_final_width_must_match_classes():
    with pytest.raises(SpecError, match="classes"):
        Network(parse_spec("32f-9f"), (784,), 10)


def test_conv_needs_image_input():
    with pytest.raises(SpecError):
        Network(parse_spec("(4)3c-10f"), (784,), 10)


def test_layer_layout():
    net = Network(parse_spec("(4)3c-2p-16f-10f", mode="set3"), (1, 8, 8), 10)
    kinds = [n.split(".")[1] for n in net.names]
    assert kinds == ["conv", "bn", "ensemble", "pool", "flatten", "dense", "bn", "ensemble",
                     "dense"]
    base = Network(parse_spec("16f-10f", bn=False), (784,), 10)
    assert [type(l) for l in base.layers][1] is ReLU
    assert not any(isinstance(l, BatchNorm) for l in base.layers)
    assert len(net.ensemble_layers()) == 2


@pytest.mark.parametrize("mode", ["set1", "set2", "set3"])
def test_weight_counts_match_baseline(mode):
    text = "(4)3c-2p-16f-10f"
    a = Network(parse_spec(text), (1, 8, 8), 10, seed=0)
    b = Network(parse_spec(text, mode=mode), (1, 8, 8), 10, seed=0)
    assert a.weight_parameter_counts() == b.weight_parameter_counts()
    for la, lb in zip([l for l in a.layers if not isinstance(l, (ReLU, EnsembleLayer))],
                      [l for l in b.layers if not isinstance(l, (ReLU, EnsembleLayer))]):
        for k in getattr(la, "params", {}):
            np.testing.assert_array_equal(la.params[k], lb.params[k])


def test_network_gradcheck(rng):
    # baseline composition: conv, bn, relu, pool, flatten, dense all chained
    net = Network(parse_spec("(2)3c-2p-6f-3f"), (1, 6, 6), 3, seed=2)
    x = rng.normal(size=(4, 1, 6, 6))
    dy = rng.normal(size=(4, 3))
    net.forward(x, train=True)
    net.zero_grad()
    dx = net.backward(dy)

    def loss():
        return float(np.sum(dy * net.forward(x, train=True)))

    assert rel_error(dx, numeric_grad(loss, x)) < 1e-5
    for name, value, grad, _ in net.trainables():
        grad, num = grad.copy(), numeric_grad(loss, value)
        if np.max(np.abs(num)) < 1e-8:
            # a conv bias feeding batch norm has an exactly zero gradient
            assert np.max(np.abs(grad)) < 1e-12, name
        else:
            assert rel_error(grad, num) < 1e-5, name


def test_arrays_roundtrip(rng):
    spec = parse_spec("8f-3f", mode="set2")
    a = Network(spec, (5,), 3, seed=1)
    a.forward(rng.normal(size=(6, 5)), train=True)
    b = Network(spec, (5,), 3, seed=99)
    b.load_arrays(a.arrays())
    x = rng.normal(size=(3, 5))
    np.testing.assert_array_equal(a.forward(x, train=False), b.forward(x, train=False))
    assert isinstance(a.layers[0], type(b.layers[0]))
    assert not isinstance(a.layers[0], Flatten)
