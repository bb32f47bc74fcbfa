import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decompcast.errors import ShapeMismatch
from decompcast.lagged import (
    ARNetParams,
    arnet_forward,
    backward,
    forward,
    lag_importance,
    lagged_reg_forward,
    layer_shapes,
)
from decompcast.losses import (
    regularization,
    regularization_grad,
    sparsity_penalty_arnet,
    sparsity_penalty_arnet_grad,
    sparsity_penalty_default,
)


def linear(w):
    return ARNetParams([np.atleast_2d(np.asarray(w, dtype=float))], [])


def test_layer_shapes_bias_only_on_hidden_layers():
    assert layer_shapes(3, 2) == [((2, 3), None)]
    assert layer_shapes(3, 2, (8, 8)) == [((8, 3), (8,)), ((8, 8), (8,)), ((2, 8), None)]


def test_init_linear_zero_deep_bounded():
    assert not linear_any(ARNetParams.init(4, 2))
    p = ARNetParams.init(4, 2, (8, 8), rng=0)
    assert np.all(np.abs(p.weights[0]) <= 1 / math.sqrt(4))
    assert np.all(np.abs(p.weights[1]) <= 1 / math.sqrt(8))
    assert all(not b.any() for b in p.biases)
    q = ARNetParams.init(4, 2, (8, 8), rng=0)
    assert all(np.array_equal(a, b) for a, b in zip(p.weights, q.weights))


def linear_any(p):
    return any(w.any() for w in p.weights)


def test_linear_forward_examples():
    assert arnet_forward([1.0, 2.0], linear([0.3, 0.3])) == pytest.approx(0.9)
    np.testing.assert_array_equal(arnet_forward([1.0, 2.0], ARNetParams.zeros(2, 3)), np.zeros(3))
    assert lagged_reg_forward([5.0, 7.0, 9.0], linear([1.0, 0.0, 0.0])) == 5.0
    assert lagged_reg_forward([0.0, 0.0, 0.0], linear([0.4, 0.1, 0.2])) == 0.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        arnet_forward([1.0, 2.0, 3.0], linear([0.3, 0.3]))
    with pytest.raises(ShapeMismatch):
        forward(linear([0.3, 0.3]), np.ones((4, 3)))


def test_relu_blocks_negative_units():
    w1 = np.array([[1.0, 0.0], [-1.0, 0.0]])
    p = ARNetParams([w1, np.array([[1.0, 100.0]])], [np.zeros(2)])
    # second unit has negative pre-activation, so its large output weight is inert
    assert arnet_forward([2.0, 0.0], p) == 2.0


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 1000))
def test_linear_exact_sensitivity(p, h, seed):
    rng = np.random.default_rng(seed)
    params = ARNetParams([rng.normal(size=(h, p))], [])
    x = rng.normal(size=p)
    base = arnet_forward(x, params)
    for j in range(p):
        bumped = x.copy()
        bumped[j] += 0.37
        np.testing.assert_allclose(arnet_forward(bumped, params) - base, params.weights[0][:, j] * 0.37, atol=1e-12)


@settings(max_examples=50)
@given(st.floats(0.01, 100), st.integers(0, 1000))
def test_bias_free_deep_net_is_positively_homogeneous(s, seed):
    rng = np.random.default_rng(seed)
    params = ARNetParams.init(5, 3, (8, 8), rng)
    x = rng.normal(size=(4, 5))
    np.testing.assert_allclose(forward(params, s * x)[0], s * forward(params, x)[0], rtol=1e-10, atol=1e-12)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    params = ARNetParams.init(4, 2, (6, 5), rng)
    for b in params.biases:
        b[...] = rng.normal(size=b.shape)
    x = rng.normal(size=(7, 4))
    dy = rng.normal(size=(7, 2))
    out, acts = forward(params, x)
    dws, dbs = backward(params, acts, dy)
    for tensor, grad in zip(params.weights + params.biases, dws + dbs):
        for idx in np.ndindex(tensor.shape):
            old = tensor[idx]
            tensor[idx] = old + 1e-6
            up = float(np.sum(forward(params, x)[0] * dy))
            tensor[idx] = old - 1e-6
            down = float(np.sum(forward(params, x)[0] * dy))
            tensor[idx] = old
            assert grad[idx] == pytest.approx((up - down) / 2e-6, rel=1e-5, abs=1e-7)


def test_lag_importance():
    np.testing.assert_array_equal(lag_importance(linear([[0.5, 0.0]])), [0.5, 0.0])
    deep = ARNetParams([np.array([[1.0, -2.0], [0.0, 1.0]]), np.ones((1, 2))], [np.zeros(2)])
    np.testing.assert_array_equal(lag_importance(deep), [1.0, 3.0])
    deep.weights[0][:, 1] = 0.0
    assert lag_importance(deep)[1] == 0.0


# -- penalties ----------------------------------------------------------------


def test_regularization_examples():
    assert regularization(np.zeros(4)) == pytest.approx(0.0, abs=1e-15)
    assert regularization([1 - 1 / math.e]) == pytest.approx(1.0, abs=1e-15)
    assert regularization(np.zeros(3), epsilon=3.0) == pytest.approx(0.0, abs=1e-15)


def test_default_sparsity_penalty_examples():
    assert sparsity_penalty_default(np.zeros(7)) == pytest.approx(0.0, abs=1e-15)
    # the log term vanishes, leaving log 3 + 1
    theta = 1 - 1 / (3 * math.e)
    assert sparsity_penalty_default([theta]) == pytest.approx(math.log(3) + 1, abs=1e-14)
    assert sparsity_penalty_default([0.5]) < sparsity_penalty_default([1.0])
    # mean over entries
    v = [0.2, -0.4, 1.3]
    oracle = sum(math.log(1 / (3 * math.e) + abs(x)) for x in v) / 3 + math.log(3) + 1
    assert sparsity_penalty_default(v) == pytest.approx(oracle, abs=1e-14)


def test_arnet_penalty_examples():
    assert sparsity_penalty_arnet(np.zeros(3)) == 0.0
    assert sparsity_penalty_arnet([1.0]) == pytest.approx(2 / (1 + math.exp(-3)) - 1, abs=1e-15)
    assert sparsity_penalty_arnet([1e12]) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "fn, grad, kwargs",
    [
        (regularization, regularization_grad, {"epsilon": 1.0, "alpha": 1.0}),
        (regularization, regularization_grad, {"epsilon": 3.0, "alpha": 2.0}),
        (sparsity_penalty_arnet, sparsity_penalty_arnet_grad, {"c1": 3.0, "c2": 3.0}),
    ],
)
def test_penalty_gradients(fn, grad, kwargs):
    rng = np.random.default_rng(0)
    theta = rng.normal(size=9)
    g = grad(theta, **kwargs)
    for i in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[i] += 1e-6
        down[i] -= 1e-6
        assert g[i] == pytest.approx((fn(up, **kwargs) - fn(down, **kwargs)) / 2e-6, rel=1e-5)
