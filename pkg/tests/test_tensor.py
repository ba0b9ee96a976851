"""Autograd tensor: elementwise ops, reductions, backward and grad mode."""

import numpy as np
import pytest

from src.autograd import Graph, Tensor, absolute, add, backward, mean, mul, no_grad, relu, sub, total
from src.errors import DimensionError, GraphError, NumericalError


class TestElementwise:

    def test_add_values(self):
        out = add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_add_zeros_is_exact(self, rng):
        a = Tensor(rng.standard_normal((2, 3, 4, 4)))
        np.testing.assert_array_equal((a + Tensor.zeros_like(a)).data, a.data)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2,\).*\(3,\)"):
            add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_channel_broadcast(self):
        x = Tensor(np.zeros((2, 3, 2, 2)))
        out = sub(x, Tensor([1.0, 2.0, 3.0]))
        assert out.shape == (2, 3, 2, 2)
        np.testing.assert_array_equal(out.data[1, :, 0, 1], [-1.0, -2.0, -3.0])

    def test_scalar_ops(self):
        x = Tensor([1.0, -2.0])
        np.testing.assert_allclose((x * 3).data, [3.0, -6.0])
        np.testing.assert_allclose((x + 1).data, [2.0, -1.0])
        np.testing.assert_allclose((1 - x).data, [0.0, 3.0])
        np.testing.assert_allclose((x / 2).data, [0.5, -1.0])

    def test_relu(self):
        np.testing.assert_array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_relu_subgradient_at_zero_is_zero(self):
        x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
        backward(total(relu(x)))
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_abs_subgradient_at_zero_is_zero(self):
        x = Tensor([-3.0, 0.0, 2.0], requires_grad=True)
        backward(total(absolute(x)))
        np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])

    def test_non_finite_result_raises(self):
        with pytest.raises(NumericalError):
            mul(Tensor([1e30]), Tensor([1e30]))


class TestBackward:

    def test_linearity(self, rng):
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        backward(total(a + b))
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))

    def test_linear_scalar(self):
        w = Tensor([1.5], requires_grad=True)
        backward(total(w * 2))
        np.testing.assert_allclose(w.grad, [2.0])

    def test_quadratic(self):
        w = Tensor([3.0], requires_grad=True)
        backward(total(w * w))
        np.testing.assert_allclose(w.grad, [6.0])

    def test_shared_operand_accumulates(self):
        w = Tensor([2.0], requires_grad=True)
        y = w * 3
        backward(total(y + y * w))
        # d/dw (3w + 3w^2) = 3 + 6w
        np.testing.assert_allclose(w.grad, [15.0])

    def test_channel_broadcast_grad_sums(self):
        x = Tensor(np.ones((2, 3, 2, 2)), requires_grad=True)
        c = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(total(mul(x, c)))
        np.testing.assert_allclose(c.grad, [8.0, 8.0, 8.0])
        np.testing.assert_allclose(x.grad[0, :, 0, 0], [1.0, 2.0, 3.0])

    def test_mean_grad(self):
        x = Tensor(np.zeros((4, 5)), requires_grad=True)
        backward(mean(x))
        np.testing.assert_allclose(x.grad, np.full((4, 5), 1 / 20))

    def test_second_backward_is_an_error(self):
        w = Tensor([1.0], requires_grad=True)
        loss = total(w * w)
        backward(loss)
        with pytest.raises(GraphError):
            backward(loss)

    def test_new_loss_on_released_graph_is_an_error(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        y = w * w
        backward(total(y))
        w.zero_grad()
        with pytest.raises(GraphError, match="released"):
            backward(mean(y))
        assert w.grad is None
        assert y.grad is None

    def test_non_scalar_loss_is_an_error(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphError):
            backward(w * 2)

    def test_detached_leaf_gets_no_grad(self):
        w = Tensor([1.0], requires_grad=True)
        c = Tensor([5.0])
        backward(total(w * c))
        assert c.grad is None

    def test_rebuilt_graph_gives_fresh_gradients(self):
        w = Tensor([2.0], requires_grad=True)
        backward(total(w * w))
        w.zero_grad()
        backward(total(w * w))
        np.testing.assert_allclose(w.grad, [4.0])

    def test_deterministic(self, rng):
        data = rng.standard_normal((2, 3, 4, 4))
        grads = []
        for _ in range(2):
            x = Tensor(data, requires_grad=True)
            backward(mean(absolute(relu(x) * 2 - 1)))
            grads.append(x.grad.copy())
        np.testing.assert_array_equal(grads[0], grads[1])


class TestGraph:

    def test_topological_order(self):
        a = Tensor([1.0], requires_grad=True)
        b = relu(a)
        c = b * 2
        loss = total(c)
        nodes = list(Graph.from_output(loss))
        assert nodes.index(a) < nodes.index(b) < nodes.index(c) < nodes.index(loss)
        assert len(Graph.from_output(loss).ops("relu")) == 1

    def test_no_grad_records_nothing(self):
        w = Tensor([1.0], requires_grad=True)
        with no_grad():
            out = w * 2
        assert not out.requires_grad
        assert out.is_leaf

    def test_dtype_follows_inputs(self):
        x = Tensor([1.0], dtype=np.float64)
        assert (x * 2).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32
