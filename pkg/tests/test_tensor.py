"""Tests for the autodiff core: value semantics, oracles, gradient checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epee import tensor as T


def naive_matmul(a, b):
    """Triple-loop reference product."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestMatmul:
    def test_identity(self):
        a = T.Tensor([[1.0, 0.0], [0.0, 1.0]])
        b = T.Tensor([[3.0, 4.0], [5.0, 6.0]])
        assert np.array_equal(T.matmul(a, b).value, b.value)

    def test_row_times_column(self):
        out = T.matmul(T.Tensor([[1.0, 2.0]]), T.Tensor([[3.0], [4.0]]))
        assert out.item() == pytest.approx(11.0, abs=1e-15)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = T.matmul(T.Tensor(a), T.Tensor(b)).value
        np.testing.assert_allclose(got, naive_matmul(a, b), atol=1e-12)

    def test_random_shapes_vs_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n, k, m = rng.integers(1, 9, size=3)
            a = rng.normal(size=(n, k))
            b = rng.normal(size=(k, m))
            got = T.matmul(T.Tensor(a), T.Tensor(b)).value
            np.testing.assert_allclose(got, naive_matmul(a, b), atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))


class TestSoftmaxRows:
    def test_zero_logits_are_uniform(self):
        out = T.softmax_rows(T.Tensor([[0.0, 0.0, 0.0, 0.0]]))
        np.testing.assert_array_equal(out.value, [[0.25, 0.25, 0.25, 0.25]])

    def test_large_logits_do_not_overflow(self):
        out = T.softmax_rows(T.Tensor([[1000.0, 0.0]]))
        assert np.isfinite(out.value).all()
        assert out.value[0, 0] == pytest.approx(1.0)
        assert out.value[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_matches_direct_scalar_evaluation(self):
        out = T.softmax_rows(T.Tensor([[1.0, 2.0, 3.0]]))
        denom = sum(math.exp(v) for v in (1.0, 2.0, 3.0))
        expect = [math.exp(v) / denom for v in (1.0, 2.0, 3.0)]
        np.testing.assert_allclose(out.value[0], expect, atol=1e-12)

    @given(st.integers(1, 6), st.integers(2, 8), st.integers(0, 10**9))
    @settings(max_examples=60, deadline=None)
    def test_rows_sum_to_one(self, rows, cols, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-50, 50, size=(rows, cols))
        out = T.softmax_rows(T.Tensor(x))
        np.testing.assert_allclose(out.value.sum(axis=1), 1.0, atol=1e-9)
        assert (out.value > 0).all() and (out.value < 1.0 + 1e-12).all()


class TestCrossEntropy:
    def test_perfect_prediction_is_zero(self):
        out = T.cross_entropy(T.Tensor([[1.0, 0.0, 0.0]]), 0)
        assert out.item() == 0.0

    def test_uniform_four_way(self):
        out = T.cross_entropy(T.Tensor([[0.25] * 4]), 2)
        assert out.item() == pytest.approx(math.log(4), abs=1e-12)

    def test_matches_scalar_evaluation(self):
        out = T.cross_entropy(T.Tensor([[0.7, 0.3]]), 1)
        assert out.item() == pytest.approx(-math.log(0.3), abs=1e-12)

    def test_zero_probability_clamps_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            out = T.cross_entropy(T.Tensor([[1.0, 0.0]]), 1)
        assert out.item() == pytest.approx(-math.log(1e-12))
        assert "clamped" in caplog.text

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label"):
            T.cross_entropy(T.Tensor([[0.5, 0.5]]), 2)


class TestGradCheck:
    def test_quadratic_is_exact(self):
        x = np.array([[1.0, 2.0, 3.0]])
        err = T.grad_check(lambda t: T.sum_all(T.mul(t, t)), x)
        assert err < 1e-6
        # analytic gradient itself is 2x
        p = T.Tensor(x, is_param=True)
        p.zero_grad()
        T.backward(T.sum_all(T.mul(p, p)))
        np.testing.assert_allclose(p.grad, 2 * x, atol=1e-12)

    def test_constant_function_zero_error(self):
        const = T.Tensor([[5.0]])
        err = T.grad_check(lambda t: T.sum_all(T.mul(const, const)), np.ones((2, 2)))
        assert err == 0.0

    def test_epsilon_validated(self):
        with pytest.raises(ValueError, match="epsilon"):
            T.grad_check(lambda t: T.sum_all(t), np.ones((1, 1)), epsilon=1e-2)

    def test_non_finite_loss_rejected(self):
        big = T.Tensor([[700.0]])

        def f(t):
            # exp overflow path: matmul by big then exp via softmax trick is
            # stabilized, so synthesize non-finite loss directly instead
            raise FloatingPointError("boom")

        with pytest.raises(FloatingPointError):
            T.grad_check(f, np.ones((1, 1)))


def _rng_point(rng, shape, away_from_zero=False):
    x = rng.uniform(-2, 2, size=shape)
    if away_from_zero:
        x = x + 0.25 * np.sign(x + (x == 0))
    return x


class TestOperationGradients:
    """Central finite differences validate every backward rule."""

    def test_matmul(self):
        rng = np.random.default_rng(0)
        b = T.Tensor(rng.normal(size=(4, 3)))
        err = T.grad_check(lambda t: T.sum_all(T.matmul(t, b)),
                           rng.normal(size=(2, 4)))
        assert err < 1e-4

    def test_add_and_mul(self):
        rng = np.random.default_rng(1)
        other = T.Tensor(rng.normal(size=(3, 3)))
        err = T.grad_check(lambda t: T.sum_all(T.mul(T.add(t, other), other)),
                           rng.normal(size=(3, 3)))
        assert err < 1e-4

    def test_add_bias(self):
        rng = np.random.default_rng(2)
        x = T.Tensor(rng.normal(size=(4, 3)))
        err = T.grad_check(lambda t: T.sum_all(T.mul(T.add_bias(x, t),
                                                     T.add_bias(x, t))),
                           rng.normal(size=(1, 3)))
        assert err < 1e-4

    def test_relu_away_from_kink(self):
        rng = np.random.default_rng(3)
        x = _rng_point(rng, (3, 4), away_from_zero=True)
        err = T.grad_check(lambda t: T.sum_all(T.mul(T.relu(t), T.relu(t))), x)
        assert err < 1e-4

    def test_layer_norm(self):
        rng = np.random.default_rng(4)
        gain = T.Tensor(rng.uniform(0.5, 1.5, size=(1, 5)))
        bias = T.Tensor(rng.normal(size=(1, 5)))
        err = T.grad_check(
            lambda t: T.sum_all(T.mul(T.layer_norm_rows(t, gain, bias),
                                      T.layer_norm_rows(t, gain, bias))),
            rng.normal(size=(3, 5)))
        assert err < 1e-4

    def test_layer_norm_gain_bias(self):
        rng = np.random.default_rng(5)
        x = T.Tensor(rng.normal(size=(3, 5)))

        def f(t):
            g = T.slice_cols(t, 0, 5)
            b = T.slice_cols(t, 5, 10)
            y = T.layer_norm_rows(x, g, b)
            return T.sum_all(T.mul(y, y))

        err = T.grad_check(f, rng.uniform(0.5, 1.5, size=(1, 10)))
        assert err < 1e-4

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(6)

        def f(t):
            return T.cross_entropy(T.softmax_rows(t), 1)

        err = T.grad_check(f, rng.normal(size=(1, 5)))
        assert err < 1e-4

    def test_transpose_scale_concat_slice(self):
        rng = np.random.default_rng(7)

        def f(t):
            left = T.slice_cols(t, 0, 2)
            right = T.slice_cols(t, 2, 4)
            merged = T.concat_cols([T.matmul(T.transpose(left), right),
                                    T.scale(T.transpose(right), 0.5)])
            return T.sum_all(T.mul(merged, merged))

        err = T.grad_check(f, rng.normal(size=(3, 4)))
        assert err < 1e-4

    def test_embed(self):
        rng = np.random.default_rng(8)
        idx = [0, 2, 2, 1]  # repeated index exercises scatter-add

        def f(t):
            e = T.embed(t, idx)
            return T.sum_all(T.mul(e, e))

        err = T.grad_check(f, rng.normal(size=(3, 4)))
        assert err < 1e-4

    def test_slice_rows(self):
        rng = np.random.default_rng(9)
        err = T.grad_check(
            lambda t: T.sum_all(T.mul(T.slice_rows(t, 1, 3), T.slice_rows(t, 1, 3))),
            rng.normal(size=(4, 3)))
        assert err < 1e-4


class TestGraphSemantics:
    def test_no_nan_inf_from_finite_inputs(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            x = T.Tensor(rng.uniform(-100, 100, size=(3, 4)))
            for out in (T.softmax_rows(x), T.relu(x), T.scale(x, 3.0),
                        T.transpose(x)):
                assert np.isfinite(out.value).all()

    def test_constructing_non_finite_raises(self):
        with pytest.raises(FloatingPointError):
            T.Tensor([[np.inf, 0.0]])

    def test_backward_requires_scalar_root(self):
        with pytest.raises(T.ShapeError):
            T.backward(T.Tensor(np.ones((2, 2))))

    def test_gradient_shape_matches_value_shape(self):
        a = T.parameter(np.ones((2, 3)))
        out = T.sum_all(T.scale(a, 2.0))
        T.backward(out)
        assert a.grad.shape == a.value.shape
        np.testing.assert_array_equal(a.grad, np.full((2, 3), 2.0))

    def test_reused_node_accumulates(self):
        # y = x*x + x*x reuses the same product node twice
        a = T.parameter(np.array([[3.0]]))
        prod = T.mul(a, a)
        out = T.sum_all(T.add(prod, prod))
        T.backward(out)
        assert a.grad[0, 0] == pytest.approx(12.0)

    def test_param_gradients_accumulate_across_backwards(self):
        a = T.parameter(np.array([[2.0]]))
        for _ in range(3):
            T.backward(T.sum_all(T.mul(a, a)))
        assert a.grad[0, 0] == pytest.approx(3 * 4.0)
        a.zero_grad()
        assert a.grad[0, 0] == 0.0
