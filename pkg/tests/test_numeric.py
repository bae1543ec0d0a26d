import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drcb.numeric import (MLP, Adam, DivergenceError, Linear, Param, cross_entropy, entropy,
                          entropy_grad, log_softmax, softmax)
from oracles import central_difference, rel_error

finite = st.floats(-20, 20, allow_nan=False)


def test_linear_init_bounds():
    rng = np.random.default_rng(0)
    layer = Linear(64, 8, rng)
    assert np.abs(layer.W.value).max() <= 1 / 8
    assert np.abs(layer.b.value).max() <= 1 / 8


@pytest.mark.parametrize("batch", [None, 5])
def test_mlp_backward_matches_finite_differences(batch):
    rng = np.random.default_rng(1)
    net = MLP(8, 3, rng, hidden=8)
    x = rng.normal(size=(8,) if batch is None else (batch, 8))
    w = rng.normal(size=(3,) if batch is None else (batch, 3))

    def f():
        return float((net.forward(x) * w).sum())

    net.forward(x)
    for p in net.params:
        p.zero_grad()
    dx = net.backward(w)
    for p in net.params:
        assert rel_error(p.grad, central_difference(f, p.value)) < 1e-6
    assert rel_error(dx, central_difference(f, x)) < 1e-6


@given(arrays(np.float64, 5, elements=finite))
def test_softmax_is_a_distribution(z):
    p = softmax(z)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(np.log(p[p > 1e-300]), log_softmax(z)[p > 1e-300], atol=1e-9)


@given(arrays(np.float64, 4, elements=st.floats(-5, 5)), st.integers(0, 3))
@settings(max_examples=50)
def test_cross_entropy_gradient_is_p_minus_onehot(z, target):
    loss, grad = cross_entropy(z.copy(), target)
    expected = softmax(z)
    expected[target] -= 1
    np.testing.assert_allclose(grad, expected, atol=1e-12)
    num = central_difference(lambda: cross_entropy(z, target)[0], z, h=1e-6)
    np.testing.assert_allclose(grad, num, atol=1e-6)


def test_entropy_gradient_matches_finite_differences():
    z = np.random.default_rng(2).normal(size=6)
    num = central_difference(lambda: float(entropy(z)), z)
    assert rel_error(entropy_grad(z), num) < 1e-7


def test_entropy_endpoints():
    assert entropy(np.zeros(4)) == pytest.approx(np.log(4))
    assert entropy(np.array([30.0, 0.0])) < 1e-10


def test_adam_first_step_after_reset_is_lr_sign():
    p = Param(np.array([1.0, -2.0, 0.5]))
    opt = Adam([p], lr=0.01)
    for g in ([0.3, -0.1, 2.0], [1.0, 1.0, 1.0], [-5.0, 0.2, 0.1]):
        p.grad[:] = g
        opt.step()
    opt.reset_state()
    assert opt.t == 0
    assert all(np.all(m == 0) for m in opt.m) and all(np.all(v == 0) for v in opt.v)
    before = p.value.copy()
    p.grad[:] = [1e-3, -4.0, 7.0]
    opt.step()
    assert opt.t == 1
    # bias-corrected moments at t=1 are g and g^2, so the step is lr * g/|g|
    np.testing.assert_allclose(before - p.value, 0.01 * np.sign(p.grad), rtol=1e-4)
    m_hat, v_hat = opt.corrected_moments()
    np.testing.assert_allclose(m_hat[0], p.grad)
    np.testing.assert_allclose(v_hat[0], p.grad ** 2)


def test_adam_matches_textbook_update():
    rng = np.random.default_rng(3)
    p = Param(rng.normal(size=4))
    opt = Adam([p], lr=1e-3)
    x, m, v = p.value.copy(), np.zeros(4), np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        p.grad[:] = g
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 1e-3 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.value, x, rtol=1e-12)


def test_adam_rejects_non_finite_gradients():
    p = Param(np.zeros(2))
    opt = Adam([p])
    p.grad[:] = [np.nan, 0.0]
    with pytest.raises(DivergenceError):
        opt.step()
    assert np.all(p.value == 0)
