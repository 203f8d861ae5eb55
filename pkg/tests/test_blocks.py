"""Residual and deformable alignment blocks."""

import numpy as np
import pytest

from fieldnet import ops
from fieldnet.autograd import Tensor, gradcheck, no_grad
from fieldnet.blocks import (ACT_SLOPE, RESIDUAL_INIT_SCALE, AlignmentChain,
                             Conv2dLayer, DeformConv2d, DeltaDfResBlock,
                             DfResBlock, ParamStore, ResBlock, he_init)
from fieldnet.errors import ShapeError


def fresh(seed=0):
    return ParamStore(), np.random.default_rng(seed)


class TestParamStore:
    def test_registration_order_preserved(self):
        store, rng = fresh()
        ResBlock(store, "b", 4, rng, np.float32)
        assert store.names() == ["b.conv1.weight", "b.conv1.bias",
                                 "b.conv2.weight", "b.conv2.bias"]

    def test_duplicate_name_rejected(self):
        store, rng = fresh()
        Conv2dLayer(store, "c", 2, 2, 3, rng, np.float32)
        with pytest.raises(ValueError, match="duplicate"):
            Conv2dLayer(store, "c", 2, 2, 3, rng, np.float32)

    def test_param_count_and_prefix_groups(self):
        store, rng = fresh()
        Conv2dLayer(store, "a.c1", 2, 3, 3, rng, np.float32)
        Conv2dLayer(store, "b.c2", 2, 3, 1, rng, np.float32)
        assert store.param_count() == (3 * 2 * 9 + 3) + (3 * 2 + 3)
        groups = store.count_by_prefix(depth=1)
        assert groups == {"a": 57, "b": 9}

    def test_add_marks_requires_grad(self):
        store = ParamStore()
        t = store.add("x", Tensor(np.zeros(3, dtype=np.float32)))
        assert t.requires_grad


class TestInit:
    def test_he_std(self):
        rng = np.random.default_rng(0)
        w = he_init(rng, (256, 64, 3, 3), 64 * 9, np.float32)
        assert abs(w.std() - np.sqrt(2.0 / (64 * 9))) < 2e-4
        assert abs(w.mean()) < 1e-4

    def test_he_scale_factor(self):
        a = he_init(np.random.default_rng(1), (64, 64), 64, np.float64)
        b = he_init(np.random.default_rng(1), (64, 64), 64, np.float64,
                    scale=RESIDUAL_INIT_SCALE)
        np.testing.assert_allclose(b, a * RESIDUAL_INIT_SCALE)

    def test_biases_zero(self):
        store, rng = fresh()
        layer = Conv2dLayer(store, "c", 2, 5, 3, rng, np.float32)
        assert not layer.bias.data.any()

    def test_zero_init_weights(self):
        store, rng = fresh()
        layer = Conv2dLayer(store, "z", 2, 5, 3, rng, np.float32,
                            zero_init=True)
        assert not layer.weight.data.any()

    def test_offset_convs_start_at_zero(self):
        store, rng = fresh()
        block = DfResBlock(store, "d", 4, rng, np.float32)
        assert not block.offset_conv1.weight.data.any()
        assert not block.offset_conv2.weight.data.any()
        store2, rng2 = fresh()
        dblock = DeltaDfResBlock(store2, "d", 4, rng2, np.float32)
        assert not dblock.offset_delta_conv.weight.data.any()


class TestConvLayer:
    def test_same_padding_preserves_shape(self):
        store, rng = fresh()
        layer = Conv2dLayer(store, "c", 3, 8, 3, rng, np.float64)
        with no_grad():
            out = layer(Tensor(rng.standard_normal((3, 6, 7))))
        assert out.shape == (8, 6, 7)


class TestResBlock:
    def test_near_identity_at_init(self):
        # the scaled second conv keeps the residual branch small
        store, rng = fresh()
        block = ResBlock(store, "r", 8, rng, np.float64)
        x = Tensor(np.random.default_rng(5).standard_normal((8, 6, 6)))
        with no_grad():
            out = block(x)
        delta = np.abs(out.data - x.data).max() / np.abs(x.data).max()
        assert delta < 1.0

    def test_gradcheck(self):
        store, rng = fresh()
        block = ResBlock(store, "r", 3, rng, np.float64)
        x = Tensor(np.random.default_rng(6).standard_normal((3, 4, 4)),
                   requires_grad=True)
        assert gradcheck(block, [x]) < 1e-4


class TestDfResBlock:
    def test_equals_plain_residual_at_init(self):
        # zero-initialized offset convs make the deformable path identical
        # to an ordinary conv residual at the start of training
        store, rng = fresh(3)
        block = DfResBlock(store, "d", 4, rng, np.float64)
        g = np.random.default_rng(7)
        ref = Tensor(g.standard_normal((4, 6, 6)))
        sup = Tensor(g.standard_normal((4, 6, 6)))
        with no_grad():
            got = block(ref, sup).data
            t = ops.leaky_relu(
                ops.conv2d(sup, block.dconv1.weight, block.dconv1.bias,
                           1, 1), ACT_SLOPE)
            want = ops.add(sup, ops.conv2d(t, block.dconv2.weight,
                                           block.dconv2.bias, 1, 1)).data
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_shape_mismatch_rejected(self):
        store, rng = fresh()
        block = DfResBlock(store, "d", 4, rng, np.float64)
        with pytest.raises(ShapeError):
            block(Tensor(np.zeros((4, 6, 6))), Tensor(np.zeros((4, 5, 6))))

    def test_regular_mode_has_single_offset_conv(self):
        store, rng = fresh()
        DfResBlock(store, "d", 4, rng, np.float32, offset_mode="regular")
        assert not any("offset_conv2" in n for n in store.names())

    def test_gradcheck_with_live_offsets(self):
        # nudge the offset conv off zero so offset gradients are exercised
        # at non-lattice sampling points
        store, rng = fresh(4)
        block = DfResBlock(store, "d", 2, rng, np.float64)
        for layer in (block.offset_conv1, block.offset_conv2):
            layer.weight.data[:] = np.random.default_rng(8).uniform(
                -0.05, 0.05, layer.weight.shape)
        g = np.random.default_rng(9)
        ref = Tensor(g.standard_normal((2, 4, 4)), requires_grad=True)
        sup = Tensor(g.standard_normal((2, 4, 4)), requires_grad=True)
        assert gradcheck(block, [ref, sup]) < 1e-4


class TestDeltaDfResBlock:
    def test_returns_output_and_offsets(self):
        store, rng = fresh()
        block = DeltaDfResBlock(store, "d", 4, rng, np.float64)
        g = np.random.default_rng(10)
        ref = Tensor(g.standard_normal((4, 5, 5)))
        sup = Tensor(g.standard_normal((4, 5, 5)))
        with no_grad():
            out, off = block(ref, sup)
        assert out.shape == (4, 5, 5)
        assert off.shape == (18, 5, 5)

    def test_accumulates_offsets(self):
        store, rng = fresh()
        block = DeltaDfResBlock(store, "d", 4, rng, np.float64)
        block.offset_delta_conv.bias.data[:] = 0.25
        g = np.random.default_rng(11)
        ref = Tensor(g.standard_normal((4, 5, 5)))
        sup = Tensor(g.standard_normal((4, 5, 5)))
        carried = Tensor(np.full((18, 5, 5), 0.5))
        with no_grad():
            _, off0 = block(ref, sup)
            _, off1 = block(ref, sup, carried)
        np.testing.assert_allclose(off0.data, 0.25)
        np.testing.assert_allclose(off1.data, 0.75)

    def test_fewer_params_than_dfres(self):
        s1, r1 = fresh()
        DfResBlock(s1, "a", 8, r1, np.float32)
        s2, r2 = fresh()
        DeltaDfResBlock(s2, "a", 8, r2, np.float32)
        assert s2.param_count() < s1.param_count()


class TestAlignmentChain:
    @pytest.mark.parametrize("mode", ["dfres", "delta_dfres",
                                      "regular_offsets"])
    def test_modes_run_and_preserve_shape(self, mode):
        store, rng = fresh(12)
        chain = AlignmentChain(store, "al", 4, 2, rng, np.float64, mode)
        g = np.random.default_rng(13)
        ref = Tensor(g.standard_normal((4, 6, 6)))
        sup = Tensor(g.standard_normal((4, 6, 6)))
        with no_grad():
            out = chain(ref, sup)
        assert out.shape == (4, 6, 6)

    def test_unknown_mode_rejected(self):
        store, rng = fresh()
        with pytest.raises(ValueError, match="align mode"):
            AlignmentChain(store, "al", 4, 2, rng, np.float64, "bogus")

    def test_depth_controls_block_count(self):
        store, rng = fresh()
        chain = AlignmentChain(store, "al", 4, 3, rng, np.float32, "dfres")
        assert len(chain.blocks) == 3
        assert any(n.startswith("al.block2.") for n in store.names())


class TestDeformShiftOracle:
    def test_integer_offset_shifts_sampling(self):
        # a uniform offset of one full pixel in x must reproduce the plain
        # conv applied to the shifted input (away from borders)
        store, rng = fresh(14)
        dconv = DeformConv2d(store, "d", 1, 1, rng, np.float64)
        g = np.random.default_rng(15)
        x = g.standard_normal((1, 8, 10))
        shifted = np.roll(x, -1, axis=2)
        off = np.zeros((18, 8, 10))
        off[1::2] = 1.0  # (dy, dx) interleaved per tap: dx components
        with no_grad():
            got = ops.deform_conv2d(Tensor(x), Tensor(off), dconv.weight,
                                    dconv.bias).data
            want = ops.conv2d(Tensor(shifted), dconv.weight, dconv.bias,
                              1, 1).data
        np.testing.assert_allclose(got[:, 2:-2, 2:-2], want[:, 2:-2, 2:-2],
                                   atol=1e-10)
