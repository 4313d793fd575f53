import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltcsnn.ann import (RELU, RELU_LA, AnalogNetwork, TrainConfig, accuracy, backward,
                        build_network, excess_loss, forward, total_loss, train)
from ltcsnn.coding import ExponentRange, LaVariant, la_array, la_derivative_array
from ltcsnn.data import make_blobs
from ltcsnn.errors import ConfigError, TrainingDivergedError

H = ExponentRange(-3, 0)
O = ExponentRange(-3, 4)


def numeric_grad(f, w, h=1e-6):
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        old = w[idx]
        w[idx] = old + h
        up = f()
        w[idx] = old - h
        down = f()
        w[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-30)


def small_net(arch, shape, seed, mode=RELU):
    return build_network(arch, shape, hidden_range=H, output_range=O, input_range=ExponentRange(-7, 0),
                         mode=mode, seed=seed)


@pytest.mark.parametrize("arch, shape", [("F7-F5-F3", (6,)), ("3C3-P2-F4", (2, 6, 6)),
                                         ("2C3s2p1-F3", (1, 5, 5))])
@pytest.mark.parametrize("seed", [0, 1])
def test_cross_entropy_gradients_relu(arch, shape, seed):
    rng = np.random.default_rng(seed)
    net = small_net(arch, shape, seed)
    x = rng.uniform(0, 1, (5,) + shape)
    y = rng.integers(0, net.output_shape[0], 5)
    grads = backward(net, forward(net, x, RELU), y, 0.0, RELU)
    for l in net.trainable():
        num = numeric_grad(lambda: total_loss(net, x, y, 0.0, RELU), net.ops[l].weight)
        assert rel_err(grads[l], num) <= 1e-5


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_excess_gradient_in_isolation(seed):
    rng = np.random.default_rng(seed)
    net = small_net("F6-F4", (5,), seed)
    for op in net.ops:
        op.weight *= 4.0  # push activations above the caps
    x = rng.uniform(0, 1, (4, 5))
    y = rng.integers(0, 4, 4)
    lam = 0.7
    with_excess = backward(net, forward(net, x, RELU), y, lam, RELU)
    without = backward(net, forward(net, x, RELU), y, 0.0, RELU)
    f = lambda: lam * excess_loss(forward(net, x, RELU).act, net.ranges)
    assert f() > 0
    for l in net.trainable():
        num = numeric_grad(f, net.ops[l].weight)
        assert rel_err(with_excess[l] - without[l], num) <= 1e-5


def test_surrogate_factor_pointwise():
    r = ExponentRange(-3, 0)
    sat = r.saturation
    eps = 1e-9
    points = np.array([0.0, r.cap - eps, sat, sat + eps])
    assert la_derivative_array(points, r).tolist() == [1.0, 1.0, 0.0, 0.0]


def test_relu_la_forward_semantics():
    net = small_net("F4-F3", (3,), 0, RELU_LA)
    x = np.random.default_rng(0).uniform(0, 1, (6, 3))
    res = forward(net, x)
    xin = la_array(x, net.input_range)
    np.testing.assert_array_equal(res.inputs[0], xin)
    np.testing.assert_array_equal(res.out[0], la_array(np.maximum(xin @ net.ops[0].weight, 0), H))
    z = res.pre[1]
    np.testing.assert_array_equal(res.out[1], np.where(z >= 0, la_array(np.maximum(z, 0), O), z))


def test_output_layer_may_not_be_single():
    net = small_net("F4-F3", (3,), 0)
    with pytest.raises(ConfigError):
        AnalogNetwork(net.input_shape, net.ops, net.ranges, [LaVariant.MULTI, LaVariant.SINGLE])


def test_training_learns_blobs():
    data = make_blobs(600, n_classes=3, dim=4, seed=3)
    net = build_network("F16-F3", (4,), hidden_range=H, output_range=O, input_range=ExponentRange(-7, 0),
                        seed=0)
    net, hist = train(net, data.x, data.y, TrainConfig(learning_rate=0.1, epochs=15, batch_size=32))
    assert hist[-1]["loss"] < hist[0]["loss"]
    assert accuracy(net, data.x, data.y) > 0.9


def test_training_is_deterministic():
    data = make_blobs(200, seed=1)
    cfg = TrainConfig(learning_rate=0.1, epochs=2, batch_size=16, seed=5)
    a, _ = train(small_net("F8-F3", (2,), 0), data.x, data.y, cfg)
    b, _ = train(small_net("F8-F3", (2,), 0), data.x, data.y, cfg)
    for oa, ob in zip(a.ops, b.ops):
        np.testing.assert_array_equal(oa.weight, ob.weight)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    data = make_blobs(64, seed=0)
    net = small_net("F8-F3", (2,), 0, RELU)
    with pytest.raises(TrainingDivergedError):
        train(net, data.x, data.y, TrainConfig(learning_rate=1e200, epochs=3, batch_size=8, lambda_excess=0))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 40), min_size=1, max_size=20))
def test_excess_loss_is_zero_below_cap(values):
    a = np.array(values)
    expected = 0.5 * np.sum(np.maximum(a - O.cap, 0) ** 2)
    assert excess_loss([a], [O]) == pytest.approx(expected)
    if a.max() <= O.cap:
        assert excess_loss([a], [O]) == 0.0
