import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsseg.errors import ShapeError
from tsseg.numerics import (AdamState, adam_step, finite_diff_grad, log_softmax, matmul, relu,
                            row_softmax)


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_hand_cases():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])), [[11.0]])


def test_matmul_random_against_loops():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_matmul_property(n, k, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, k)), rng.normal(size=(k, m))
    np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-12)


def test_row_softmax_examples():
    np.testing.assert_allclose(row_softmax(np.zeros((1, 4))), [[0.25] * 4])
    p = row_softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(p))
    assert p[0, 0] == pytest.approx(1.0) and p[0, 1] == pytest.approx(0.0, abs=1e-300)
    e = math.e
    np.testing.assert_allclose(row_softmax(np.array([[1.0, 2.0]])), [[1 / (1 + e), e / (1 + e)]],
                               rtol=0, atol=1e-12)
    assert row_softmax(np.array([[1.0, 2.0]]))[0, 0] == pytest.approx(0.2689, abs=1e-4)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(-50, 50), st.integers(0, 2**32 - 1))
def test_row_softmax_rows_sum_and_shift_invariance(rows, cols, shift, seed):
    z = np.random.default_rng(seed).normal(scale=10, size=(rows, cols))
    p = row_softmax(z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p >= 0) and np.all(p <= 1)
    np.testing.assert_allclose(row_softmax(z + shift), p, atol=1e-9)


def test_log_softmax_is_stable():
    lp = log_softmax(np.array([[1000.0, 0.0]]))
    np.testing.assert_allclose(lp, [[0.0, -1000.0]])


def test_relu():
    np.testing.assert_array_equal(relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])
    np.testing.assert_array_equal(relu(-np.ones((2, 3))), np.zeros((2, 3)))
    x = np.abs(np.random.default_rng(1).normal(size=(3, 3)))
    np.testing.assert_array_equal(relu(x), x)


def test_adam_zero_gradient_is_identity():
    w = np.array([[1.5, -2.0]])
    state = AdamState.zeros_like(w, lr=0.1)
    before = w.copy()
    for _ in range(5):
        adam_step(w, np.zeros_like(w), state)
    np.testing.assert_array_equal(w, before)
    np.testing.assert_array_equal(state.m, 0)
    np.testing.assert_array_equal(state.v, 0)
    assert state.step_count == 5


def test_adam_first_step_closed_form():
    # at t=1 the bias-corrected moments are g and g^2, so the step is lr*g/(|g|+eps)
    lr, g = 0.01, -0.3
    w = np.array([[2.0]])
    state = AdamState.zeros_like(w, lr=lr)
    adam_step(w, np.array([[g]]), state)
    assert w[0, 0] == pytest.approx(2.0 - lr * g / (abs(g) + 1e-8), abs=1e-15)
    assert w[0, 0] == pytest.approx(2.0 + lr, abs=1e-8)


def test_adam_minimises_quadratic():
    w = np.array([[1.0]])
    state = AdamState.zeros_like(w, lr=0.1)
    for _ in range(100):
        adam_step(w, 2 * w, state)
    assert abs(w[0, 0]) < 0.1


def test_adam_weight_decay_enters_gradient():
    w = np.array([[1.0]])
    a = AdamState.zeros_like(w, lr=0.1, weight_decay=0.5)
    adam_step(w, np.array([[0.0]]), a)
    # decayed gradient 0.5 -> first step moves by lr*sign
    assert w[0, 0] == pytest.approx(0.9, abs=1e-7)
    np.testing.assert_allclose(a.m, [[0.05]])


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(np.zeros((2, 2)), np.zeros((2, 3)), AdamState.zeros_like(np.zeros((2, 2))))


def test_finite_diff_quadratic_and_linear():
    g = finite_diff_grad(lambda x: float(x[0, 0] ** 2), np.array([[3.0]]), 1e-5)
    assert g[0, 0] == pytest.approx(6.0, abs=1e-6)
    c = np.random.default_rng(2).normal(size=(3, 4))
    np.testing.assert_allclose(finite_diff_grad(lambda x: float(np.sum(c * x)), np.zeros((3, 4))), c,
                               atol=1e-9)


def test_finite_diff_leaves_input_untouched():
    x = np.arange(6.0).reshape(2, 3)
    before = x.copy()
    finite_diff_grad(lambda v: float(np.sum(v ** 3)), x)
    np.testing.assert_array_equal(x, before)
