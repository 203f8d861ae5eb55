"""Differentiable ops: forward values against naive reference
implementations, gradients against central differences.

The convolution oracle below is written as plain nested loops with no
shared code or layout assumptions, so a layout bug in the fast path cannot
cancel out of the comparison.
"""

import numpy as np
import pytest

from fieldnet import ops
from fieldnet.autograd import ShapeError, Tensor, gradcheck, no_grad


def conv2d_loop(x, w, b, stride=1, pad=0):
    """Reference convolution: nested loops, zero padding."""
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, ho, wo), dtype=x.dtype)
    for co in range(c_out):
        for oy in range(ho):
            for ox in range(wo):
                acc = b[co]
                for ci in range(c_in):
                    for ky in range(k):
                        for kx in range(k):
                            acc += (w[co, ci, ky, kx]
                                    * xp[ci, oy * stride + ky,
                                         ox * stride + kx])
                out[co, oy, ox] = acc
    return out


def bilinear_loop(feat, y, x):
    """Reference bilinear sample at one point, zero outside the map."""
    c, h, w = feat.shape
    out = np.zeros(c, dtype=feat.dtype)
    y0, x0 = int(np.floor(y)), int(np.floor(x))
    wy, wx = y - y0, x - x0
    for dy, dx, wt in ((0, 0, (1 - wy) * (1 - wx)),
                       (0, 1, (1 - wy) * wx),
                       (1, 0, wy * (1 - wx)),
                       (1, 1, wy * wx)):
        yy, xx = y0 + dy, x0 + dx
        if 0 <= yy < h and 0 <= xx < w:
            out += wt * feat[:, yy, xx]
    return out


class TestConvForwardOracle:
    @pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (1, 1, 3), (1, 2, 3),
                                              (2, 0, 3), (2, 1, 3), (1, 0, 1),
                                              (2, 0, 1)])
    def test_matches_loop_reference(self, stride, pad, k):
        rng = np.random.default_rng(41)
        x = rng.standard_normal((3, 9, 8))
        w = rng.standard_normal((4, 3, k, k))
        b = rng.standard_normal(4)
        with no_grad():
            got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b),
                             stride=stride, pad=pad).data
        want = conv2d_loop(x, w, b, stride=stride, pad=pad)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor(np.zeros((2, 5, 5))),
                       Tensor(np.zeros((4, 3, 3, 3))),
                       Tensor(np.zeros(4)))


class TestBilinearOracle:
    def test_matches_loop_reference(self):
        rng = np.random.default_rng(7)
        feat = rng.standard_normal((2, 6, 5))
        with no_grad():
            for y, x in zip(rng.uniform(-1.5, 6.5, 20),
                            rng.uniform(-1.5, 5.5, 20)):
                got = ops.bilinear_sample(Tensor(feat), y, x).data
                np.testing.assert_allclose(got, bilinear_loop(feat, y, x),
                                           atol=1e-12)

    def test_lattice_points_reproduce_values(self):
        feat = np.arange(12.0).reshape(1, 3, 4)
        with no_grad():
            assert ops.bilinear_sample(Tensor(feat), 0.0, 1.0).data[0] == 1.0
            assert ops.bilinear_sample(Tensor(feat), 2.0, 3.0).data[0] == 11.0


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal((5, 7)) * 10
        with no_grad():
            s = ops.softmax_rows(Tensor(y)).data
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)

    def test_cols_sum_to_one(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal((5, 7)) * 10
        with no_grad():
            s = ops.softmax_cols(Tensor(y)).data
        np.testing.assert_allclose(s.sum(axis=0), 1.0, atol=1e-12)

    def test_shift_invariant(self):
        y = np.array([[1.0, 2.0, 3.0]])
        with no_grad():
            a = ops.softmax_rows(Tensor(y)).data
            b = ops.softmax_rows(Tensor(y + 100.0)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_extreme_values_stay_finite(self):
        y = np.array([[1000.0, -1000.0, 0.0]])
        with no_grad():
            s = ops.softmax_rows(Tensor(y)).data
        assert np.isfinite(s).all()


class TestElementwise:
    def test_clamp01_range(self):
        x = np.array([-0.5, 0.25, 1.5])
        with no_grad():
            got = ops.clamp01(Tensor(x)).data
        np.testing.assert_allclose(got, [0.0, 0.25, 1.0])

    def test_relu_and_leaky(self):
        x = np.array([-2.0, 3.0])
        with no_grad():
            np.testing.assert_allclose(ops.relu(Tensor(x)).data, [0.0, 3.0])
            np.testing.assert_allclose(
                ops.leaky_relu(Tensor(x), 0.1).data, [-0.2, 3.0])

    def test_concat_matches_numpy(self):
        a, b = np.ones((2, 3)), np.zeros((4, 3))
        with no_grad():
            got = ops.concat([Tensor(a), Tensor(b)], axis=0).data
        np.testing.assert_allclose(got, np.concatenate([a, b], axis=0))


GRADCHECK_TOL = 1e-4


def _t(rng, shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestGradients:
    """Central-difference checks at float64; tolerance 1e-4 relative."""

    def test_matmul(self):
        rng = np.random.default_rng(0)
        a, b = _t(rng, (3, 4)), _t(rng, (4, 2))
        assert gradcheck(ops.matmul, [a, b]) < GRADCHECK_TOL

    def test_add_mul_sub(self):
        rng = np.random.default_rng(1)
        a, b = _t(rng, (3, 3)), _t(rng, (3, 3))
        assert gradcheck(ops.add, [a, b]) < GRADCHECK_TOL
        assert gradcheck(ops.mul, [a, b]) < GRADCHECK_TOL
        assert gradcheck(ops.sub, [a, b]) < GRADCHECK_TOL

    def test_scalar_broadcast_mul(self):
        rng = np.random.default_rng(2)
        a = _t(rng, (2, 3))
        s = Tensor(np.float64(0.7), requires_grad=True)
        assert gradcheck(ops.mul, [a, s]) < GRADCHECK_TOL

    def test_softmaxes(self):
        rng = np.random.default_rng(3)
        y = _t(rng, (4, 5))
        assert gradcheck(ops.softmax_rows, [y]) < GRADCHECK_TOL
        assert gradcheck(ops.softmax_cols, [y]) < GRADCHECK_TOL

    def test_reductions_and_reshapes(self):
        rng = np.random.default_rng(4)
        x = _t(rng, (3, 4))
        assert gradcheck(ops.mean, [x]) < GRADCHECK_TOL
        assert gradcheck(lambda t: ops.reshape(t, (4, 3)), [x]) < GRADCHECK_TOL
        assert gradcheck(ops.transpose, [x]) < GRADCHECK_TOL

    def test_concat(self):
        rng = np.random.default_rng(5)
        a, b = _t(rng, (2, 3)), _t(rng, (2, 3))
        assert gradcheck(lambda u, v: ops.concat([u, v], axis=0),
                         [a, b]) < GRADCHECK_TOL

    def test_smooth_unary(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.uniform(0.5, 2.0, (3, 3)), requires_grad=True)
        assert gradcheck(ops.sqrt, [x]) < GRADCHECK_TOL
        assert gradcheck(lambda t: ops.add_scalar(t, 1.5), [x]) < GRADCHECK_TOL
        assert gradcheck(lambda t: ops.mul_scalar(t, -2.0), [x]) < GRADCHECK_TOL

    def test_kinked_unary_away_from_kink(self):
        # |x| > 0.1 everywhere keeps finite differences off the kink
        rng = np.random.default_rng(7)
        base = rng.uniform(0.2, 1.0, (3, 3)) * np.where(
            rng.random((3, 3)) < 0.5, -1.0, 1.0)
        x = Tensor(base, requires_grad=True)
        assert gradcheck(ops.relu, [x]) < GRADCHECK_TOL
        assert gradcheck(ops.leaky_relu, [x]) < GRADCHECK_TOL
        assert gradcheck(ops.absolute, [x]) < GRADCHECK_TOL
        assert gradcheck(ops.clamp01, [x]) < GRADCHECK_TOL

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
    def test_conv2d(self, stride, pad):
        rng = np.random.default_rng(8)
        x = _t(rng, (2, 6, 5))
        w = _t(rng, (3, 2, 3, 3))
        b = _t(rng, (3,))
        assert gradcheck(
            lambda *a: ops.conv2d(*a, stride=stride, pad=pad),
            [x, w, b]) < GRADCHECK_TOL

    def test_bilinear_sample_non_lattice(self):
        # coordinates strictly between lattice points: the sampling gradient
        # is smooth there, while lattice points sit on corners of the hat
        # basis where finite differences straddle a kink
        rng = np.random.default_rng(9)
        feat = _t(rng, (2, 5, 5))
        y = Tensor(np.float64(1.37), requires_grad=True)
        x = Tensor(np.float64(2.61), requires_grad=True)
        assert gradcheck(ops.bilinear_sample, [feat, y, x]) < GRADCHECK_TOL

    def test_deform_conv2d_non_lattice(self):
        rng = np.random.default_rng(10)
        x = _t(rng, (2, 5, 5))
        off = Tensor(rng.uniform(-0.45, 0.45, (2 * 9, 5, 5)) + 0.011,
                     requires_grad=True)
        w = _t(rng, (3, 2, 3, 3))
        b = _t(rng, (3,))
        assert gradcheck(ops.deform_conv2d, [x, off, w, b]) < GRADCHECK_TOL
