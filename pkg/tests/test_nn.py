import numpy as np
import pytest
from hypothesis import given, strategies as st

from subopt_lfd.exceptions import DimensionError, NonFiniteError
from subopt_lfd.nn import Adam, Mlp, check_finite, optimize_step

from helpers import fd_gradient, max_rel_error


def test_param_count_formula():
    widths = [3, 5, 2, 1]
    assert Mlp.param_count(widths) == 4 * 5 + 6 * 2 + 3 * 1
    assert Mlp(widths).n_params == 35


def test_identity_map():
    net = Mlp([3, 3], params=np.concatenate([np.eye(3).ravel(), np.zeros(3)]))
    x = np.array([0.3, -1.2, 4.0])
    np.testing.assert_array_equal(net.forward(x), x)


def test_zero_params_give_zero():
    net = Mlp([4, 8, 8, 2])
    np.testing.assert_array_equal(net.forward(np.random.default_rng(0).normal(size=(5, 4))), 0.0)


def test_hand_evaluated_two_layer_net():
    # W1 = [[1, 2], [3, 4]], b1 = [0.5, -0.5], W2 = [[1], [-1]], b2 = [0.25]
    params = np.array([1, 2, 3, 4, 0.5, -0.5, 1, -1, 0.25], dtype=float)
    net = Mlp([2, 2, 1], "tanh", params)
    expected = np.tanh(1.5) - np.tanh(1.5) + 0.25
    assert net.forward(np.array([1.0, 0.0]))[0] == pytest.approx(expected, abs=1e-15)
    x = np.array([0.2, -0.7])
    h = np.tanh(np.array([0.2 * 1 - 0.7 * 3 + 0.5, 0.2 * 2 - 0.7 * 4 - 0.5]))
    assert net.forward(x)[0] == pytest.approx(h[0] - h[1] + 0.25, abs=1e-15)


def test_relu_hand_value():
    params = np.array([1.0, -1.0, 0.0, 0.0, 2.0, 3.0, 0.0])
    net = Mlp([1, 2, 1], "relu", params)
    assert net.forward(np.array([0.5]))[0] == 1.0
    assert net.forward(np.array([-0.5]))[0] == 1.5


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        Mlp([3, 2]).forward(np.zeros(4))
    with pytest.raises(DimensionError):
        Mlp([3, 2], params=np.zeros(3))


def test_quadratic_gradient_is_theta():
    theta = np.random.default_rng(1).normal(size=7)
    np.testing.assert_allclose(fd_gradient(lambda p: 0.5 * p @ p, theta), theta, atol=1e-9)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_backward_matches_finite_differences(activation):
    rng = np.random.default_rng(2)
    net = Mlp.initialize([3, 6, 5, 2], rng, activation)
    x = rng.normal(size=(9, 3))
    w = rng.normal(size=(9, 2))

    def loss(p):
        return float(np.sum(w * Mlp([3, 6, 5, 2], activation, p).forward(x)))

    out, cache = net.forward_cache(x)
    analytic = net.backward(cache, w)
    assert max_rel_error(analytic, fd_gradient(loss, net.params)) <= 1e-4


def test_constant_loss_zero_gradient():
    net = Mlp.initialize([2, 4, 1], np.random.default_rng(0))
    _, cache = net.forward_cache(np.ones((3, 2)))
    np.testing.assert_array_equal(net.backward(cache, np.zeros((3, 1))), 0.0)


def test_input_gradient():
    rng = np.random.default_rng(3)
    net = Mlp.initialize([3, 4, 1], rng)
    x = rng.normal(size=3)
    _, cache = net.forward_cache(x)
    _, gx = net.backward(cache, np.ones(1), return_input_grad=True)
    np.testing.assert_allclose(gx, fd_gradient(lambda v: net.forward(v)[0], x), rtol=1e-6, atol=1e-9)


def test_check_finite_carries_value():
    with pytest.raises(NonFiniteError) as err:
        check_finite(np.array([1.0, np.nan]), "loss")
    assert np.isnan(err.value.value)
    assert check_finite(3.0) == 3.0


def test_adam_zero_gradient_keeps_params():
    net = Mlp.initialize([2, 3, 1], np.random.default_rng(0))
    before = net.params.copy()
    optimize_step(Adam(net.n_params), net, np.zeros(net.n_params))
    np.testing.assert_array_equal(net.params, before)


def test_adam_rejects_nan():
    with pytest.raises(NonFiniteError):
        Adam(2).step(np.zeros(2), np.array([np.nan, 0.0]))


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        Adam(2).step(np.zeros(3), np.zeros(3))


def test_adam_minimises_quadratic():
    opt = Adam(1, step_size=0.05)
    theta = np.array([1.0])
    for _ in range(500):
        theta = opt.step(theta, theta)
    assert abs(theta[0]) < 1e-3


def test_step_counter_monotone():
    opt = Adam(3)
    p = np.ones(3)
    for i in range(1, 5):
        p = opt.step(p, p)
        assert opt.t == i
    assert opt.m.shape == opt.v.shape == (3,)


def _train_trace(seed):
    rng = np.random.default_rng(seed)
    net = Mlp.initialize([2, 4, 1], rng)
    x = np.random.default_rng(99).normal(size=(16, 2))
    y = x[:, :1] ** 2
    opt = Adam(net.n_params, 1e-2)
    trace = []
    for _ in range(20):
        out, cache = net.forward_cache(x)
        optimize_step(opt, net, net.backward(cache, 2 * (out - y) / len(y)))
        trace.append(net.params.copy())
    return np.array(trace)


def test_training_trace_deterministic():
    np.testing.assert_array_equal(_train_trace(5), _train_trace(5))


@given(st.integers(0, 2**31 - 1))
def test_serialization_roundtrip_bit_identical(seed):
    rng = np.random.default_rng(seed)
    net = Mlp.initialize([3, 5, 2], rng, "relu" if seed % 2 else "tanh")
    x = rng.normal(size=(4, 3))
    back = Mlp.from_dict(net.to_dict())
    np.testing.assert_array_equal(back.forward(x), net.forward(x))


def test_save_load(tmp_path):
    net = Mlp.initialize([2, 3, 1], np.random.default_rng(0))
    net.save(tmp_path / "m.json")
    np.testing.assert_array_equal(Mlp.load(tmp_path / "m.json").params, net.params)


def test_init_bounds():
    net = Mlp.initialize([16, 4, 1], np.random.default_rng(0))
    (W1, b1), (W2, b2) = net.layers()
    assert np.all(np.abs(W1) <= 0.25) and np.all(np.abs(b1) <= 0.25)
    assert np.all(np.abs(W2) <= 0.5)
