"""Convolution layers, residual blocks, and deformable alignment blocks.

All learnable tensors register into a ``ParamStore`` under dotted names so
the model can serialize, count, and update them uniformly.  Offset-predicting
convs are zero-initialized: alignment blocks start out exactly equivalent to
regular residual blocks, which keeps early training stable and makes the
zero-offset tests hold at init.

The activation between stacked convs is LeakyReLU(0.1) throughout.
"""

import numpy as np

from . import ops
from .autograd import Tensor
from .errors import ShapeError

ACT_SLOPE = 0.1


class ParamStore:
    """Ordered name -> Tensor registry for all learnable parameters."""

    def __init__(self):
        self._params = {}

    def add(self, name, tensor):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def __getitem__(self, name):
        return self._params[name]

    def __len__(self):
        return len(self._params)

    def param_count(self):
        return sum(t.size for t in self._params.values())

    def count_by_prefix(self, depth=1):
        """Parameter totals grouped by the first ``depth`` name components."""
        groups = {}
        for name, t in self._params.items():
            key = ".".join(name.split(".")[:depth])
            groups[key] = groups.get(key, 0) + t.size
        return groups


# He init on every residual branch would double activation variance per
# block; ~12 such stages deep the output explodes.  Scaling each branch's
# last conv keeps the network near-identity at init while staying He-shaped.
RESIDUAL_INIT_SCALE = 0.1


def he_init(rng, shape, fan_in, dtype, scale=1.0):
    std = scale * np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Conv2dLayer:
    """k x k conv layer; He fan-in init, zero bias, optional zero weights."""

    def __init__(self, store, name, c_in, c_out, k, rng, dtype,
                 stride=1, pad=None, zero_init=False, init_scale=1.0):
        self.stride = stride
        self.pad = k // 2 if pad is None else pad
        if zero_init:
            w = np.zeros((c_out, c_in, k, k), dtype=dtype)
        else:
            w = he_init(rng, (c_out, c_in, k, k), c_in * k * k, dtype,
                        scale=init_scale)
        self.weight = store.add(f"{name}.weight", Tensor(w, dtype=dtype))
        self.bias = store.add(f"{name}.bias",
                              Tensor(np.zeros(c_out, dtype=dtype), dtype=dtype))

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class DeformConv2d:
    """3x3 deformable conv; offsets are supplied by the caller."""

    def __init__(self, store, name, c_in, c_out, rng, dtype, k=3,
                 init_scale=1.0):
        self.k = k
        w = he_init(rng, (c_out, c_in, k, k), c_in * k * k, dtype,
                    scale=init_scale)
        self.weight = store.add(f"{name}.weight", Tensor(w, dtype=dtype))
        self.bias = store.add(f"{name}.bias",
                              Tensor(np.zeros(c_out, dtype=dtype), dtype=dtype))

    def __call__(self, x, offsets):
        return ops.deform_conv2d(x, offsets, self.weight, self.bias)


class ResBlock:
    """x + conv(act(conv(x))), shape preserving."""

    def __init__(self, store, name, channels, rng, dtype):
        self.conv1 = Conv2dLayer(store, f"{name}.conv1", channels, channels, 3,
                                 rng, dtype)
        self.conv2 = Conv2dLayer(store, f"{name}.conv2", channels, channels, 3,
                                 rng, dtype, init_scale=RESIDUAL_INIT_SCALE)

    def __call__(self, x):
        return ops.add(x, self.conv2(ops.leaky_relu(self.conv1(x), ACT_SLOPE)))


class DfResBlock:
    """Residual block with two deformable convs aligning ``sup`` to ``ref``.

    offset_mode 'dfres' re-estimates offsets for the second deformable layer
    from the intermediate feature; 'regular' estimates one offset map from
    concat(ref, sup) and reuses it for both layers.
    """

    def __init__(self, store, name, channels, rng, dtype, offset_mode="dfres"):
        if offset_mode not in ("dfres", "regular"):
            raise ValueError(f"unknown offset mode {offset_mode!r}")
        self.offset_mode = offset_mode
        self.offset_conv1 = Conv2dLayer(store, f"{name}.offset_conv1",
                                        2 * channels, 18, 3, rng, dtype,
                                        zero_init=True)
        if offset_mode == "dfres":
            self.offset_conv2 = Conv2dLayer(store, f"{name}.offset_conv2",
                                            2 * channels, 18, 3, rng, dtype,
                                            zero_init=True)
        self.dconv1 = DeformConv2d(store, f"{name}.dconv1", channels, channels,
                                   rng, dtype)
        self.dconv2 = DeformConv2d(store, f"{name}.dconv2", channels, channels,
                                   rng, dtype, init_scale=RESIDUAL_INIT_SCALE)

    def estimate_offsets(self, ref_feat, cur_feat, layer):
        """Offset map for deformable layer 1 or 2 under the configured mode."""
        if layer == 1 or self.offset_mode == "regular":
            return self.offset_conv1(ops.concat([ref_feat, cur_feat], axis=0))
        return self.offset_conv2(ops.concat([ref_feat, cur_feat], axis=0))

    def __call__(self, ref_feat, sup_feat):
        if ref_feat.shape != sup_feat.shape:
            raise ShapeError(
                f"alignment features differ: {ref_feat.shape} vs {sup_feat.shape}")
        off1 = self.estimate_offsets(ref_feat, sup_feat, layer=1)
        t = ops.leaky_relu(self.dconv1(sup_feat, off1), ACT_SLOPE)
        if self.offset_mode == "regular":
            off2 = off1
        else:
            off2 = self.estimate_offsets(ref_feat, t, layer=2)
        return ops.add(sup_feat, self.dconv2(t, off2))


class DeltaDfResBlock:
    """Single-deform-conv variant that accumulates offset deltas down a chain.

    Cheaper than DfResBlock: one offset conv and one deformable conv per
    block.  ``__call__`` returns (output, offsets) so the accumulated offsets
    thread through to the next block.
    """

    def __init__(self, store, name, channels, rng, dtype):
        self.offset_delta_conv = Conv2dLayer(store, f"{name}.offset_delta_conv",
                                             2 * channels, 18, 3, rng, dtype,
                                             zero_init=True)
        self.dconv = DeformConv2d(store, f"{name}.dconv", channels, channels,
                                  rng, dtype, init_scale=RESIDUAL_INIT_SCALE)

    def __call__(self, ref_feat, sup_feat, accumulated_offsets=None):
        if ref_feat.shape != sup_feat.shape:
            raise ShapeError(
                f"alignment features differ: {ref_feat.shape} vs {sup_feat.shape}")
        delta = self.offset_delta_conv(ops.concat([ref_feat, sup_feat], axis=0))
        offsets = delta if accumulated_offsets is None \
            else ops.add(accumulated_offsets, delta)
        out = ops.add(sup_feat, self.dconv(sup_feat, offsets))
        return out, offsets


class AlignmentChain:
    """Chained alignment blocks; each block's output replaces the supporting
    feature fed to the next."""

    def __init__(self, store, name, channels, depth, rng, dtype, align_mode):
        self.align_mode = align_mode
        self.blocks = []
        for i in range(depth):
            bname = f"{name}.block{i}"
            if align_mode == "delta_dfres":
                self.blocks.append(DeltaDfResBlock(store, bname, channels, rng, dtype))
            elif align_mode == "dfres":
                self.blocks.append(DfResBlock(store, bname, channels, rng, dtype,
                                              offset_mode="dfres"))
            elif align_mode == "regular_offsets":
                self.blocks.append(DfResBlock(store, bname, channels, rng, dtype,
                                              offset_mode="regular"))
            else:
                raise ValueError(f"unknown align mode {align_mode!r}")

    def __call__(self, ref_feat, sup_feat):
        cur = sup_feat
        if self.align_mode == "delta_dfres":
            offsets = None
            for block in self.blocks:
                cur, offsets = block(ref_feat, cur, offsets)
        else:
            for block in self.blocks:
                cur = block(ref_feat, cur)
        return cur
