import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genlab import tensor as T
from genlab.tensor import ContractError, DimensionError, Tensor

from conftest import fd_check


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3, 5], [7, 9]]))
        np.testing.assert_array_equal(out.data, [[3, 5], [7, 9]])

    def test_dot_product(self):
        out = T.matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[11]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient_finite_differences(self, rng):
        a = Tensor(rng.uniform(-2, 2, (3, 4)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, (4, 2)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2)))
        err = fd_check(lambda: T.reduce_sum(T.mul(T.matmul(a, b), w)), [a, b])
        assert err < 1e-4


class TestSoftplus:
    def test_zero_is_ln2(self):
        assert T.softplus(Tensor(0.0)).item() == math.log(2)

    def test_large_input_no_overflow(self):
        y = T.softplus(Tensor(1000.0)).item()
        assert abs(y - 1000.0) <= 1e-12 * 1000.0

    def test_negative_tail_matches_extended_precision(self):
        mpmath.mp.dps = 40
        expected = float(mpmath.log1p(mpmath.exp(-20)))
        assert expected == pytest.approx(2.0612e-9, rel=1e-4)
        assert T.softplus(Tensor(-20.0)).item() == pytest.approx(expected, rel=1e-14)

    def test_derivative_is_sigmoid(self, rng):
        x = Tensor(rng.uniform(-5, 5, 7), requires_grad=True)
        T.reduce_sum(T.softplus(x)).backward()
        np.testing.assert_allclose(x.grad, 1 / (1 + np.exp(-x.data)), rtol=1e-12)

    @given(st.lists(st.floats(-700, 700), min_size=2, max_size=20))
    def test_positive_and_monotone(self, xs):
        xs = np.sort(np.array(xs))
        y = T.softplus(Tensor(xs)).data
        assert np.all(np.isfinite(y))
        assert np.all(y[xs > -700] > 0)
        assert np.all(np.diff(y) >= 0)


class TestReductions:
    def test_mean(self):
        assert T.reduce_mean(Tensor([2.0, 4.0])).item() == 3.0

    def test_sum(self):
        assert T.reduce_sum(Tensor([1.0, 2.0, 3.0])).item() == 6.0

    def test_mean_gradient_broadcasts(self):
        w = Tensor(np.arange(5.0), requires_grad=True)
        T.reduce_mean(w).backward()
        np.testing.assert_allclose(w.grad, 0.2)

    @pytest.mark.parametrize("op", [T.reduce_mean, T.reduce_sum])
    def test_empty_rejected(self, op):
        with pytest.raises(ContractError):
            op(Tensor(np.zeros(0)))


class TestElementwise:
    def test_leaky_relu(self):
        np.testing.assert_allclose(T.leaky_relu(Tensor([-2.0, 3.0]), 0.1).data, [-0.2, 3.0])

    def test_add(self):
        np.testing.assert_array_equal(T.add(Tensor([1, 1]), Tensor([2, 3])).data, [3, 4])

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.add(Tensor([1, 2, 3]), Tensor([1, 2]))

    def test_sub_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.sub(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))))

    @pytest.mark.parametrize(
        "fn",
        [
            lambda a, b: T.add(a, b),
            lambda a, b: T.sub(a, b),
            lambda a, b: T.mul(a, b),
            lambda a, b: T.scale(a, -1.7),
            lambda a, b: T.negate(a),
            lambda a, b: T.leaky_relu(a, 0.2),
            lambda a, b: T.tanh(a),
            lambda a, b: T.softplus(a),
        ],
        ids=["add", "sub", "mul", "scale", "negate", "leaky_relu", "tanh", "softplus"],
    )
    def test_gradients(self, fn, rng):
        a = Tensor(rng.uniform(-2, 2, (4, 3)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, (4, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 3)))
        assert fd_check(lambda: T.reduce_sum(T.mul(fn(a, b), w)), [a, b]) < 1e-4

    def test_bias_row_broadcast_gradient(self, rng):
        x = Tensor(rng.uniform(-2, 2, (5, 3)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, 3), requires_grad=True)
        w = Tensor(rng.normal(size=(5, 3)))
        assert fd_check(lambda: T.reduce_sum(T.mul(T.tanh(T.add(x, b)), w)), [x, b]) < 1e-4

    def test_linear_gradient(self, rng):
        x = Tensor(rng.uniform(-2, 2, (5, 3)), requires_grad=True)
        W = Tensor(rng.uniform(-2, 2, (4, 3)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, 4), requires_grad=True)
        w = Tensor(rng.normal(size=(5, 4)))
        assert fd_check(lambda: T.reduce_sum(T.mul(T.linear(x, W, b), w)), [x, W, b]) < 1e-4

    def test_scalar_broadcast(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = T.reduce_sum(T.mul(T.add(x, 1.0), 3.0))
        y.backward()
        assert y.item() == 15.0
        np.testing.assert_array_equal(x.grad, [3.0, 3.0])


class TestBackward:
    def test_sum_grad_is_ones(self):
        w = Tensor([0.3, -1.0, 2.0], requires_grad=True)
        T.reduce_sum(w).backward()
        np.testing.assert_array_equal(w.grad, [1, 1, 1])

    def test_mean_of_squares(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        loss = T.reduce_mean(T.mul(w, w))
        loss.backward()
        np.testing.assert_allclose(w.grad, [1.0, 2.0])
        assert fd_check(lambda: T.reduce_mean(T.mul(w, w)), [w]) < 1e-4

    def test_two_layer_mlp(self, rng):
        x = Tensor(rng.uniform(-2, 2, (6, 3)))
        W1 = Tensor(rng.uniform(-1, 1, (3, 5)), requires_grad=True)
        b1 = Tensor(rng.uniform(-1, 1, 5), requires_grad=True)
        W2 = Tensor(rng.uniform(-1, 1, (5, 1)), requires_grad=True)

        def loss():
            h = T.leaky_relu(T.add(T.matmul(x, W1), b1), 0.2)
            return T.reduce_mean(T.softplus(T.matmul(h, W2)))

        assert fd_check(loss, [W1, b1, W2]) < 1e-4

    def test_non_scalar_rejected(self):
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0], requires_grad=True).backward()

    def test_accumulates_without_reset(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        T.reduce_sum(T.scale(w, 2.0)).backward()
        T.reduce_sum(T.scale(w, 2.0)).backward()
        np.testing.assert_array_equal(w.grad, [4.0, 4.0])

    def test_shared_subexpression_visited_once(self):
        w = Tensor([3.0], requires_grad=True)
        h = T.mul(w, w)  # used twice below
        T.reduce_sum(T.add(h, h)).backward()
        np.testing.assert_allclose(w.grad, [12.0])

    def test_deterministic_after_reset(self, rng):
        x = Tensor(rng.normal(size=(8, 4)))
        W = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        grads = []
        for _ in range(2):
            W.grad = None
            T.reduce_mean(T.softplus(T.tanh(T.matmul(x, W)))).backward()
            grads.append(W.grad.tobytes())
        assert grads[0] == grads[1]

    def test_no_grad_records_nothing(self):
        w = Tensor([1.0], requires_grad=True)
        with T.no_grad():
            y = T.reduce_sum(T.scale(w, 2.0))
        assert not y.requires_grad and y.op == "leaf"

    def test_finite_outputs_on_finite_inputs(self, rng):
        x = Tensor(rng.uniform(-500, 500, 100))
        for y in (T.softplus(x), T.tanh(x), T.leaky_relu(x), T.negate(x), T.scale(x, 3.0)):
            assert np.all(np.isfinite(y.data))
