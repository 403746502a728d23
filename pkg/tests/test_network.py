import math

import numpy as np
import pytest

from conftest import central_diff, rel_err
from proxyhash.errors import ConfigError, DimensionError, FormatError
from proxyhash.network import (
    DenseLayer,
    Mlp,
    backward,
    build_mlp,
    forward,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    xavier_init,
)


def min_relu_margin(net, x):
    h, margin = np.asarray(x, dtype=float), np.inf
    for layer in net.layers[:-1]:
        z = h @ layer.weights.T + layer.bias
        margin = min(margin, float(np.min(np.abs(z))))
        h = np.maximum(z, 0)
    return margin


def tiny(w):
    return Mlp([DenseLayer(np.array([[w]]), np.zeros(1), "tanh")])


class TestXavier:
    def test_bounds_and_bias(self, rng):
        for _ in range(50):
            layer = xavier_init(1, 1, rng)
            assert abs(layer.weights[0, 0]) <= math.sqrt(3)
        layer = xavier_init(30, 20, rng)
        assert np.all(np.abs(layer.weights) <= math.sqrt(6 / 50))
        assert layer.weights.shape == (20, 30)
        assert np.all(layer.bias == 0)

    def test_deterministic(self):
        a = xavier_init(5, 7, np.random.default_rng(3))
        b = xavier_init(5, 7, np.random.default_rng(3))
        assert np.array_equal(a.weights, b.weights)

    def test_zero_dim(self, rng):
        with pytest.raises(ConfigError):
            xavier_init(0, 4, rng)


class TestForward:
    def test_zero_network(self):
        net = Mlp([DenseLayer(np.zeros((4, 3)), np.zeros(4), "relu"), DenseLayer(np.zeros((2, 4)), np.zeros(2), "tanh")])
        assert np.array_equal(forward(net, [1.0, -2.0, 3.0]), np.zeros(2))

    def test_one_by_one(self):
        assert forward(tiny(0.7), [1.5]) == pytest.approx([math.tanh(1.05)])

    def test_hand_evaluated_two_layer(self):
        net = Mlp(
            [
                DenseLayer(np.array([[0.5, -1.0], [2.0, 0.25]]), np.array([0.1, -0.2]), "relu"),
                DenseLayer(np.array([[1.0, -0.5]]), np.array([0.05]), "tanh"),
            ]
        )
        # relu(0.5 - 2 + 0.1) = 0, relu(2 + 0.5 - 0.2) = 2.3, tanh(0 - 1.15 + 0.05)
        assert forward(net, [1.0, 2.0])[0] == pytest.approx(-0.8004990217606296, abs=1e-15)

    def test_bounded_and_deterministic(self, rng):
        net = build_mlp([6, 16, 8], rng)
        x = rng.normal(scale=50, size=(20, 6))
        out = forward(net, x)
        assert np.all(np.abs(out) <= 1)
        assert np.array_equal(out, forward(net, x))

    def test_dimension_mismatch(self, rng):
        net = build_mlp([3, 4, 2], rng)
        with pytest.raises(DimensionError):
            forward(net, [1.0, 2.0])

    def test_last_layer_must_be_tanh(self):
        with pytest.raises(ConfigError):
            Mlp([DenseLayer(np.ones((1, 1)), np.zeros(1), "relu")])


class TestBackward:
    def test_zero_upstream(self, rng):
        net = build_mlp([3, 5, 2], rng)
        grads, _ = backward(net, rng.normal(size=3), np.zeros(2))
        assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)

    def test_closed_form_tanh(self):
        w, x, up = 0.8, -1.3, 0.6
        grads, dx = backward(tiny(w), [x], [up])
        t = math.tanh(w * x)
        assert grads[0][0][0, 0] == pytest.approx(up * (1 - t * t) * x, rel=1e-14)
        assert dx[0] == pytest.approx(up * (1 - t * t) * w, rel=1e-14)

    def test_upstream_shape(self, rng):
        net = build_mlp([3, 4, 2], rng)
        with pytest.raises(DimensionError):
            backward(net, np.zeros(3), np.zeros(3))

    def test_gradient_check_random_nets(self, rng):
        worst = 0.0
        for _ in range(100):
            dims = list(rng.integers(1, 9, size=rng.integers(2, 5)))
            net = build_mlp(dims, rng)
            for layer in net.layers:
                layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
            x = rng.normal(size=(3, dims[0]))
            while min_relu_margin(net, x) < 1e-2:  # keep finite differences off the kink
                x = rng.normal(size=(3, dims[0]))
            up = rng.normal(size=(3, dims[-1]))
            grads, dx = backward(net, x, up)
            for li, layer in enumerate(net.layers):
                for pi, param in enumerate((layer.weights, layer.bias)):

                    def f(p, layer=layer, pi=pi):
                        saved = (layer.weights, layer.bias)
                        if pi == 0:
                            layer.weights = p
                        else:
                            layer.bias = p
                        val = float(np.sum(up * forward(net, x)))
                        layer.weights, layer.bias = saved
                        return val

                    worst = max(worst, rel_err(grads[li][pi], central_diff(f, param)))
            worst = max(worst, rel_err(dx, central_diff(lambda z: float(np.sum(up * forward(net, z))), x)))
        assert worst <= 1e-4


class TestSgd:
    def test_zero_lr_and_zero_grad(self, rng):
        net = build_mlp([3, 4, 2], rng)
        before = [p.copy() for p in net.parameters()]
        grads, _ = backward(net, rng.normal(size=3), rng.normal(size=2))
        sgd_step(net, grads, 0.0)
        sgd_step(net, [(np.zeros_like(a), np.zeros_like(b)) for a, b in grads], 0.5)
        assert all(np.array_equal(a, b) for a, b in zip(before, net.parameters()))

    def test_arithmetic(self):
        net = tiny(1.0)
        sgd_step(net, [(np.array([[2.0]]), np.array([0.0]))], 0.1)
        assert net.layers[0].weights[0, 0] == pytest.approx(0.8)

    def test_shape_mismatch(self, rng):
        net = build_mlp([3, 4, 2], rng)
        with pytest.raises(DimensionError):
            sgd_step(net, [(np.zeros((1, 1)), np.zeros(1))] * 2, 0.1)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        net = build_mlp([5, 7, 3], rng)
        save_checkpoint(tmp_path / "n.pxw", net)
        blob = (tmp_path / "n.pxw").read_bytes()
        assert blob[:4] == b"PXW1"
        assert len(blob) == 8 + 2 * 9 + 8 * (5 * 7 + 7 + 7 * 3 + 3)
        back = load_checkpoint(tmp_path / "n.pxw")
        assert [l.activation for l in back.layers] == ["relu", "tanh"]
        for a, b in zip(net.parameters(), back.parameters()):
            assert np.array_equal(a, b)

    def test_truncated(self, tmp_path, rng):
        save_checkpoint(tmp_path / "n.pxw", build_mlp([2, 3, 2], rng))
        blob = (tmp_path / "n.pxw").read_bytes()
        (tmp_path / "t.pxw").write_bytes(blob[:-5])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "t.pxw")
