import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dagda.errors import DimensionError, NumericalError
from dagda.numerics import Adam, frob_norm_sq, glorot_init, grad_check, make_rng, matmul


def triple_loop(a, b):
    out = [[0.0] * b.shape[1] for _ in range(a.shape[0])]
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i][j] = s
    return np.array(out)


def test_matmul_identity():
    M = np.array([[1.5, -2.0], [0.25, 7.0]])
    assert np.array_equal(matmul(np.eye(2), M), M)


def test_matmul_hand_case():
    assert np.array_equal(matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]])),
                          np.array([[2.0], [4.0]]))


def test_matmul_matches_triple_loop():
    rng = make_rng(3)
    a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 3))
    assert np.max(np.abs(matmul(a, b) - triple_loop(a, b))) < 1e-12


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_rejects_nonfinite_result():
    with pytest.raises(NumericalError):
        matmul(np.array([[1e308, 1e308]]), np.array([[1e308], [1e308]]))


def test_frob_norm_sq():
    assert frob_norm_sq(np.zeros((3, 2))) == 0.0
    assert frob_norm_sq(np.array([[3.0, 4.0]])) == 25.0
    a = make_rng(1).standard_normal((4, 4))
    oracle = sum(a[i, j] ** 2 for i in range(4) for j in range(4))
    assert abs(frob_norm_sq(a) - oracle) / oracle < 1e-14


matrices = arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
                  elements=st.floats(-10, 10))


@given(matrices)
def test_double_transpose_is_exact(a):
    assert np.array_equal(a.T.T, a)


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
def test_matmul_associative(m, n, k, q, seed):
    rng = make_rng(seed)
    A, B, C = rng.standard_normal((m, n)), rng.standard_normal((n, k)), rng.standard_normal((k, q))
    left, right = matmul(matmul(A, B), C), matmul(A, matmul(B, C))
    assert np.linalg.norm(left - right) <= 1e-9 * max(1.0, np.linalg.norm(left))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = [np.array([[1.0, -2.0]]), np.array([[3.0]])]
        before = [x.copy() for x in p]
        Adam(lr=0.1).step(p, [np.zeros((1, 2)), np.zeros((1, 1))])
        assert all(np.array_equal(a, b) for a, b in zip(p, before))

    def test_first_step_moves_by_lr(self):
        # t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        w = [np.array([[0.0]])]
        Adam(lr=0.1).step(w, [np.array([[1.0]])])
        assert w[0][0, 0] == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-15)

    def test_quadratic_converges(self):
        w = [np.array([[1.0]])]
        opt = Adam(lr=0.05)
        for _ in range(100):
            opt.step(w, [2.0 * w[0]])
        assert abs(w[0][0, 0]) < 0.1
        # value of the same scalar recurrence evaluated by hand in float64
        assert w[0][0, 0] == pytest.approx(-0.00421140038463886, rel=1e-9)

    def test_step_counter_and_moment_shapes(self):
        p = [np.ones((2, 3))]
        opt = Adam()
        for t in range(1, 4):
            opt.step(p, [np.ones((2, 3))])
            assert opt.t == t
        assert opt.m[0].shape == (2, 3) and opt.v[0].shape == (2, 3)

    def test_loss_offset_does_not_change_updates(self):
        target = np.array([[0.5, -1.0]])

        def run(offset):
            w = [np.zeros((1, 2))]
            opt = Adam(lr=0.01)
            for _ in range(20):
                loss_fn = lambda ps: frob_norm_sq(ps[0] - target) + offset  # noqa: E731
                assert loss_fn(w) >= offset
                opt.step(w, [2.0 * (w[0] - target)])
            return w[0]

        assert np.array_equal(run(0.0), run(123.0))

    def test_errors(self):
        opt = Adam()
        with pytest.raises(DimensionError):
            opt.step([np.zeros((2, 2))], [np.zeros((2, 3))])
        with pytest.raises(DimensionError):
            opt.step([np.zeros((2, 2))], [])
        with pytest.raises(NumericalError, match="parameter 1"):
            opt.step([np.zeros((1, 1)), np.zeros((1, 1))], [np.zeros((1, 1)), np.array([[np.nan]])])


class TestGradCheck:
    def test_frobenius_gradient(self):
        W = make_rng(0).standard_normal((3, 4))
        err = grad_check(lambda ps: frob_norm_sq(ps[0]), [W], [2.0 * W], h=1e-5)
        assert err < 1e-7

    def test_constant_loss(self):
        W = np.ones((2, 2))
        assert grad_check(lambda ps: 4.2, [W], [np.zeros((2, 2))]) < 1e-9

    def test_catches_wrong_gradient(self):
        W = make_rng(1).standard_normal((3, 3)) + 2.0
        assert grad_check(lambda ps: frob_norm_sq(ps[0]), [W], [4.0 * W]) > 0.3

    def test_does_not_mutate_params(self):
        W = make_rng(2).standard_normal((2, 2))
        keep = W.copy()
        grad_check(lambda ps: frob_norm_sq(ps[0]), [W], [2.0 * W])
        assert np.array_equal(W, keep)


class TestGlorot:
    def test_bounds(self):
        W = glorot_init(make_rng(0), 30, 50)
        assert np.all(np.abs(W) <= math.sqrt(6.0 / 80))

    def test_deterministic(self):
        assert np.array_equal(glorot_init(make_rng(7), 4, 5), glorot_init(make_rng(7), 4, 5))

    def test_large_sample_mean(self):
        assert abs(glorot_init(make_rng(11), 1000, 1000).mean()) < 0.01

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            glorot_init(make_rng(0), 0, 3)
