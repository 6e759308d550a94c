import numpy as np
import pytest

from dalap.approximator import (
    DenseNet,
    OptimizerState,
    backward,
    huber_loss,
    mse_loss,
    optimizer_step,
    weighted_batch_loss,
)
from dalap.errors import ConfigurationError, TrainingDiverged


def finite_difference(net, states, actions, targets, weights, kind, h=1e-6):
    grad = np.zeros(net.n_params)
    for k in range(net.n_params):
        keep = net.flat[k]
        net.flat[k] = keep + h
        up = backward(net, states, actions, targets, weights, kind)[0]
        net.flat[k] = keep - h
        down = backward(net, states, actions, targets, weights, kind)[0]
        net.flat[k] = keep
        grad[k] = (up - down) / (2 * h)
    return grad


def test_forward_hand_example():
    net = DenseNet([2, 2, 1])
    net.weights[0][...] = [[1.0, -1.0], [2.0, 1.0]]
    net.biases[0][...] = [0.0, -5.0]
    net.weights[1][...] = [[3.0], [1.0]]
    net.biases[1][...] = [0.5]
    # hidden = relu([1 + 4, -1 + 2 - 5]) = [5, 0]; output = 15 + 0.5
    assert net.forward(np.array([1.0, 2.0])).tolist() == [15.5]
    assert net.forward(np.array([[1.0, 2.0], [0.0, 0.0]])).tolist() == [[15.5], [0.5]]


def test_forward_rejects_wrong_input_size():
    net = DenseNet([3, 4, 2], np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        net.forward(np.zeros(2))


def test_parameters_are_views_of_flat_vector():
    net = DenseNet([4, 24, 24, 24, 2], np.random.default_rng(0))
    assert net.n_params == 4 * 24 + 24 + 2 * (24 * 24 + 24) + 24 * 2 + 2
    net.flat[:] = 0.0
    assert all(not w.any() for w in net.weights)
    bound = 1 / np.sqrt(4)
    fresh = DenseNet([4, 24, 2], np.random.default_rng(1))
    assert np.abs(fresh.weights[0]).max() <= bound


def test_copy_is_independent():
    net = DenseNet([3, 5, 2], np.random.default_rng(0))
    clone = net.copy()
    net.flat += 1.0
    assert not np.array_equal(net.flat, clone.flat)
    clone.load_from(net)
    assert np.array_equal(net.flat, clone.flat)


@pytest.mark.parametrize("delta, expected", [(0.5, 0.125), (-0.5, 0.125), (2.0, 2.0), (-3.0, 3.0), (1.0, 0.5)])
def test_huber_values(delta, expected):
    assert float(huber_loss(delta)[0]) == expected


def test_huber_knee():
    # the quadratic branch owns |delta| = 1; the absolute branch starts just
    # above it, so the value jumps from 0.5 to 1 while the slope stays at 1
    assert float(huber_loss(1.0)[0]) == 0.5 == float(huber_loss(-1.0)[0])
    assert float(huber_loss(1.0 + 1e-9)[0]) == pytest.approx(1.0)
    for side in (1.0 - 1e-9, 1.0, 1.0 + 1e-9):
        assert float(huber_loss(side)[1]) == pytest.approx(1.0)
        assert float(huber_loss(-side)[1]) == pytest.approx(-1.0)
    assert float(huber_loss(2.0)[1]) == 1.0 and float(huber_loss(-0.25)[1]) == -0.25


def test_mse_is_half_square():
    loss, grad = mse_loss(np.array([2.0, -1.0]))
    assert loss.tolist() == [2.0, 0.5] and grad.tolist() == [2.0, -1.0]


@pytest.mark.parametrize(
    "weights, deltas, kind, expected",
    [
        ([1.0], [2.0], "mse", 2.0),
        ([0.5], [2.0], "huber", 1.0),
        ([1.0, 1.0], [2.0, 0.0], "mse", 1.0),
        ([0.0, 0.0], [5.0, 3.0], "mse", 0.0),
    ],
)
def test_weighted_batch_loss_examples(weights, deltas, kind, expected):
    loss, grad = weighted_batch_loss(weights, deltas, kind)
    assert loss == expected
    if not any(weights):
        assert not grad.any()


def test_weighted_batch_loss_is_linear_and_order_free():
    rng = np.random.default_rng(0)
    w, d = rng.random(10), rng.normal(size=10)
    base = weighted_batch_loss(w, d, "huber")[0]
    assert weighted_batch_loss(2 * w, d, "huber")[0] == pytest.approx(2 * base, rel=1e-14)
    perm = rng.permutation(10)
    assert weighted_batch_loss(w[perm], d[perm], "huber")[0] == pytest.approx(base, rel=1e-14)
    with pytest.raises(ValueError):
        weighted_batch_loss(w[:3], d, "mse")
    with pytest.raises(ConfigurationError):
        weighted_batch_loss(w, d, "l1")


@pytest.mark.parametrize("kind", ["mse", "huber"])
def test_backward_matches_central_differences(kind):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        sizes = [int(rng.integers(1, 5)), int(rng.integers(2, 7)), int(rng.integers(2, 7)), int(rng.integers(1, 4))]
        net = DenseNet(sizes, rng)
        m = int(rng.integers(1, 6))
        states = rng.normal(size=(m, sizes[0]))
        actions = rng.integers(sizes[-1], size=m)
        targets = rng.normal(size=m) * 2
        weights = rng.random(m)
        _, grad, _ = backward(net, states, actions, targets, weights, kind)
        numeric = finite_difference(net, states, actions, targets, weights, kind)
        # relative error with a floor so that near-zero entries compare absolutely
        rel = np.abs(grad - numeric) / np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-3)
        worst = max(worst, float(rel.max()))
    assert worst <= 1e-4


def test_zero_loss_gives_zero_gradient():
    net = DenseNet([3, 4, 2], np.random.default_rng(0))
    states = np.random.default_rng(1).normal(size=(5, 3))
    actions = np.array([0, 1, 1, 0, 1])
    targets = net.forward(states)[np.arange(5), actions]
    loss, grad, deltas = backward(net, states, actions, targets)
    assert loss == 0.0 and not grad.any() and not deltas.any()


def test_doubling_weights_doubles_gradient():
    rng = np.random.default_rng(2)
    net = DenseNet([3, 6, 2], rng)
    states, actions, targets = rng.normal(size=(8, 3)), rng.integers(2, size=8), rng.normal(size=8)
    w = rng.random(8)
    g1 = backward(net, states, actions, targets, w, "huber")[1]
    g2 = backward(net, states, actions, targets, 2 * w, "huber")[1]
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12)


def test_backward_delta_sign():
    net = DenseNet([1, 1])
    _, _, deltas = backward(net, np.array([[0.0]]), [0], [3.0])
    assert deltas.tolist() == [3.0]  # target - Q


def test_adam_first_step_by_hand():
    net = DenseNet([1, 1])
    opt = OptimizerState(net.n_params, step_size=0.1)
    optimizer_step(net, np.array([2.0, -0.5]), opt)
    # m_hat = g, v_hat = g**2, so the step is 0.1 * g / (|g| + 1e-8)
    expected = [-0.1 * 2.0 / (2.0 + 1e-8), 0.1 * 0.5 / (0.5 + 1e-8)]
    np.testing.assert_allclose(net.flat, expected, rtol=1e-14)
    assert opt.timestep == 1


def test_adam_second_step_by_hand():
    net = DenseNet([1, 1])
    opt = OptimizerState(net.n_params, step_size=0.01)
    optimizer_step(net, np.array([1.0, 1.0]), opt)
    before = net.flat.copy()
    optimizer_step(net, np.array([3.0, 3.0]), opt)
    m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0
    v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0
    step = 0.01 * (m / (1 - 0.9**2)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    np.testing.assert_allclose(before - net.flat, [step, step], rtol=1e-12)


def test_zero_gradient_leaves_parameters():
    net = DenseNet([2, 3, 1], np.random.default_rng(0))
    before = net.flat.copy()
    optimizer_step(net, np.zeros(net.n_params), OptimizerState(net.n_params))
    assert np.array_equal(net.flat, before)


def test_non_finite_gradient_rejected():
    net = DenseNet([2, 3, 1], np.random.default_rng(0))
    before = net.flat.copy()
    grads = np.zeros(net.n_params)
    grads[3] = np.nan
    opt = OptimizerState(net.n_params)
    with pytest.raises(TrainingDiverged):
        optimizer_step(net, grads, opt)
    assert np.array_equal(net.flat, before) and opt.timestep == 0
