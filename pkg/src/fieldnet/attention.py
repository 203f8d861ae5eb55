"""Self-attention over field features, in exact and linear-cost variants.

Both variants share one set of weights: an entry conv, 1x1 projections to
queries/keys (channels/8 wide) and values (full width), and a learnable
residual scale initialized to zero so the module starts as an identity.
The exact path materializes the n x n attention matrix; the efficient path
reassociates the product through per-factor softmaxes and never allocates
anything quadratic in the pixel count, which is what makes it usable at
test time on full frames.
"""

import numpy as np

from . import ops
from .autograd import Tensor
from .blocks import Conv2dLayer


class SAModule:
    def __init__(self, store, name, channels, qk_channels, rng, dtype):
        self.channels = channels
        self.qk_channels = qk_channels
        self.entry = Conv2dLayer(store, f"{name}.entry", channels, channels, 3,
                                 rng, dtype)
        self.conv_q = Conv2dLayer(store, f"{name}.conv_q", channels,
                                  qk_channels, 1, rng, dtype)
        self.conv_k = Conv2dLayer(store, f"{name}.conv_k", channels,
                                  qk_channels, 1, rng, dtype)
        self.conv_v = Conv2dLayer(store, f"{name}.conv_v", channels, channels,
                                  1, rng, dtype)
        self.scale = store.add(f"{name}.scale",
                               Tensor(np.zeros((), dtype=dtype), dtype=dtype))

    def forward(self, x, mode="sa"):
        """Entry conv followed by the chosen attention path."""
        feat = self.entry(x)
        if mode == "sa":
            return sa_forward(feat, self)
        if mode == "esa":
            return esa_forward(feat, self)
        raise ValueError(f"unknown attention mode {mode!r}")


def _qkv(feat, module):
    c, h, w = feat.shape
    n = h * w
    q = ops.reshape(module.conv_q(feat), (module.qk_channels, n))
    k = ops.reshape(module.conv_k(feat), (module.qk_channels, n))
    v = ops.reshape(module.conv_v(feat), (c, n))
    return q, k, v, n


def sa_forward(feat, module):
    """feat + reshape(V x softmax_rows(Q^T K)^T) * scale.

    Builds the full n x n attention matrix: quadratic time and memory.
    """
    c, h, w = feat.shape
    q, k, v, n = _qkv(feat, module)
    attn = ops.softmax_rows(ops.matmul(ops.transpose(q), k))
    out = ops.matmul(v, ops.transpose(attn))
    scaled = ops.mul(ops.reshape(out, (c, h, w)), module.scale)
    return ops.add(feat, scaled)


def esa_forward(feat, module):
    """feat + reshape(V x softmax_cols(K^T) x softmax_cols(Q)) * scale.

    Reassociated product: every intermediate is [*, qk] or [qk, *], linear
    in the pixel count.  Keys are normalized per channel over pixels and
    queries per pixel over channels, so each output pixel is a convex
    combination of per-channel value summaries and the result stays on the
    scale of the exact attention output.
    """
    c, h, w = feat.shape
    q, k, v, n = _qkv(feat, module)
    k_norm = ops.softmax_cols(ops.transpose(k))   # [n, qk], columns sum to 1
    q_norm = ops.softmax_cols(q)                  # [qk, n], columns sum to 1
    out = ops.matmul(ops.matmul(v, k_norm), q_norm)
    scaled = ops.mul(ops.reshape(out, (c, h, w)), module.scale)
    return ops.add(feat, scaled)


def linear_norm_equivalence_check(q, k, v):
    """Max |difference| between the two association orders when both softmax
    normalizations are replaced by Y/n.

    With the linear stand-in the exact and reassociated paths both reduce to
    V K^T Q / n, so any gap is pure floating-point: this validates the matrix
    plumbing shared by sa_forward and esa_forward.
    """
    qd = q.data if isinstance(q, Tensor) else np.asarray(q)
    kd = k.data if isinstance(k, Tensor) else np.asarray(k)
    vd = v.data if isinstance(v, Tensor) else np.asarray(v)
    n = qd.shape[1]
    exact = vd @ ((qd.T @ kd).T / n)
    reassociated = (vd @ kd.T) @ (qd / n)
    return float(np.abs(exact - reassociated).max())


def attention_deviation(feat, module):
    """Elementwise deviation between the SA and ESA outputs on ``feat``.

    The softmax non-linearity makes the reassociated path an approximation;
    this measures how far apart the two actually are on given features.
    Returns (max_abs_diff, relative_diff), relative to the SA attention
    term's magnitude (scale factored out, so it is meaningful at scale=0).
    """
    c, h, w = feat.shape
    q, k, v, n = _qkv(feat, module)
    attn = ops.softmax_rows(ops.matmul(ops.transpose(q), k))
    sa_term = ops.matmul(v, ops.transpose(attn)).data
    k_norm = ops.softmax_cols(ops.transpose(k))
    q_norm = ops.softmax_cols(q)
    esa_term = ops.matmul(ops.matmul(v, k_norm), q_norm).data
    diff = float(np.abs(sa_term - esa_term).max())
    denom = float(np.abs(sa_term).max())
    return diff, diff / max(denom, 1e-12)
