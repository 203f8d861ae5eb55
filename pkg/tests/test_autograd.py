"""Autograd engine: graph building, backward pass, allocation tracking."""

import numpy as np
import pytest

from fieldnet import ops
from fieldnet.autograd import (ShapeError, Tensor, backward, gradcheck,
                               is_grad_enabled, no_grad, track_allocations)


class TestTensor:
    def test_wraps_array(self):
        t = Tensor(np.zeros((2, 3), dtype=np.float32))
        assert t.shape == (2, 3)
        assert t.dtype == np.float32
        assert not t.requires_grad

    def test_scalar_item(self):
        assert Tensor(np.float64(2.5)).item() == 2.5

    def test_detach_shares_data_drops_graph(self):
        t = Tensor(np.ones(3), requires_grad=True)
        u = ops.mul(t, t)
        d = u.detach()
        assert not d.requires_grad
        assert np.shares_memory(d.data, u.data)

    def test_assert_finite_raises_on_nan(self):
        t = Tensor(np.array([1.0, np.nan]))
        with pytest.raises(Exception):
            t.assert_finite("probe")


class TestBackward:
    def test_mean_of_square(self):
        t = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        backward(ops.mean(ops.mul(t, t)))
        np.testing.assert_allclose(t.grad, 2.0 * t.data / 4.0)

    def test_operator_overloads_match_ops(self):
        a = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        b = Tensor(np.array([3.0, 5.0]), requires_grad=True)
        backward(ops.mean(a * b + a - b))
        np.testing.assert_allclose(a.grad, (b.data + 1.0) / 2.0)
        np.testing.assert_allclose(b.grad, (a.data - 1.0) / 2.0)

    def test_grad_accumulates_on_reuse(self):
        # t enters the graph twice; contributions must add
        t = Tensor(np.array([3.0]), requires_grad=True)
        backward(ops.mean(ops.add(ops.mul(t, t), t)))
        np.testing.assert_allclose(t.grad, 2.0 * t.data + 1.0)

    def test_non_scalar_loss_needs_explicit_grad(self):
        t = Tensor(np.ones((2, 2)), requires_grad=True)
        u = ops.mul(t, t)
        with pytest.raises(ShapeError):
            backward(u)
        backward(u, grad=np.ones((2, 2)))
        np.testing.assert_allclose(t.grad, 2.0 * t.data)

    def test_into_dict_isolated_from_tensor_grad(self):
        t = Tensor(np.array([2.0]), requires_grad=True)
        grads = {}
        backward(ops.mean(ops.mul(t, t)), into=grads)
        assert t.grad is None
        np.testing.assert_allclose(grads[id(t)], [4.0])

    def test_into_accumulates_across_calls(self):
        # thread-style reduction: two backward passes into one dict
        t = Tensor(np.array([2.0]), requires_grad=True)
        grads = {}
        backward(ops.mean(ops.mul(t, t)), into=grads)
        backward(ops.mean(ops.mul(t, t)), into=grads)
        np.testing.assert_allclose(grads[id(t)], [8.0])

    def test_zero_grad(self):
        t = Tensor(np.array([1.0]), requires_grad=True)
        backward(ops.mean(t))
        t.zero_grad()
        assert t.grad is None

    def test_deep_chain_no_recursion_limit(self):
        # iterative topological order must handle graphs deeper than the
        # interpreter recursion limit
        t = Tensor(np.array([1.0]), requires_grad=True)
        x = t
        for _ in range(3000):
            x = ops.add_scalar(x, 0.0)
        backward(ops.mean(x))
        np.testing.assert_allclose(t.grad, [1.0])

    def test_diamond_graph(self):
        t = Tensor(np.array([3.0]), requires_grad=True)
        a = ops.mul(t, t)
        b = ops.add(a, a)  # both branches reach t through a
        backward(ops.mean(b))
        np.testing.assert_allclose(t.grad, 4.0 * t.data)


class TestNoGrad:
    def test_flag_toggles(self):
        assert is_grad_enabled()
        with no_grad():
            assert not is_grad_enabled()
        assert is_grad_enabled()

    def test_no_graph_built(self):
        t = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            u = ops.mul(t, t)
        assert not u.requires_grad

    def test_nested(self):
        with no_grad():
            with no_grad():
                assert not is_grad_enabled()
            assert not is_grad_enabled()


class TestAllocTracker:
    def test_counts_op_outputs(self):
        t = Tensor(np.ones((4, 4), dtype=np.float64))
        with track_allocations() as tracker:
            ops.mul(t, t)
        assert tracker.bytes >= 4 * 4 * 8

    def test_peak_is_largest_single_allocation(self):
        small = Tensor(np.ones(2, dtype=np.float64))
        big = Tensor(np.ones(100, dtype=np.float64))
        with track_allocations() as tracker:
            ops.mul(small, small)
            ops.mul(big, big)
        assert tracker.peak == 100 * 8
        assert tracker.bytes >= 102 * 8


class TestGradcheck:
    def test_passes_on_smooth_op(self):
        a = Tensor(np.random.default_rng(0).standard_normal((3, 3)),
                   requires_grad=True)
        assert gradcheck(lambda t: ops.mul(t, t), [a]) < 1e-6

    def test_rejects_float32(self):
        a = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
        with pytest.raises(ValueError):
            gradcheck(lambda t: ops.mul(t, t), [a])

    def test_catches_wrong_gradient(self):
        # an op with a deliberately broken vjp must be flagged
        from fieldnet.autograd import make_op_output

        def bad_square(t):
            def vjp(g):
                return (3.0 * t.data * g,)  # wrong: should be 2x
            return make_op_output(t.data * t.data, (t,), vjp)

        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        assert gradcheck(bad_square, [a]) > 1e-2
