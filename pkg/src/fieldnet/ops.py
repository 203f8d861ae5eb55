"""Differentiable operations over ``autograd.Tensor``.

Every op validates shapes up front (``ShapeError`` on mismatch), computes its
result with numpy/BLAS or a backend kernel, and registers a vector-Jacobian
closure for the backward pass.  Broadcasting is deliberately limited to the
conv bias add and scalar multiplication; everything else requires exact
shape agreement.
"""

import numpy as np

from . import backend
from .autograd import Tensor, make_op_output
from .errors import ShapeError


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_dtypes(*tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed tensor dtypes {sorted(map(str, dtypes))}")


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise and reductions

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes(a, b)
    _check_same_shape(a, b, "add")
    return make_op_output(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes(a, b)
    _check_same_shape(a, b, "sub")
    return make_op_output(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    """Elementwise product; one operand may be a single-element scalar tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes(a, b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"mul: shape {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g * bd
        gb = g * ad
        if a.size == 1 and g.size != 1:
            ga = ga.sum().reshape(a.shape).astype(g.dtype)
        if b.size == 1 and g.size != 1:
            gb = gb.sum().reshape(b.shape).astype(g.dtype)
        return ga, gb

    return make_op_output(ad * bd, (a, b), vjp)


def mul_scalar(a, s):
    s = float(s)
    return make_op_output(a.data * np.asarray(s, dtype=a.dtype),
                          (a,), lambda g: (g * s,))


def add_scalar(a, s):
    s = float(s)
    return make_op_output(a.data + np.asarray(s, dtype=a.dtype),
                          (a,), lambda g: (g,))


def relu(x):
    mask = x.data > 0
    return make_op_output(np.where(mask, x.data, x.dtype.type(0)),
                          (x,), lambda g: (g * mask,))


def leaky_relu(x, negative_slope=0.1):
    slope = x.dtype.type(negative_slope)
    mask = x.data > 0
    out = np.where(mask, x.data, x.data * slope)
    return make_op_output(out, (x,), lambda g: (np.where(mask, g, g * slope),))


def absolute(x):
    sign = np.sign(x.data)
    return make_op_output(np.abs(x.data), (x,), lambda g: (g * sign,))


def sqrt(x):
    out = np.sqrt(x.data)
    return make_op_output(out, (x,), lambda g: (g * (0.5 / out),))


def clamp01(x):
    mask = (x.data >= 0) & (x.data <= 1)
    return make_op_output(np.clip(x.data, 0, 1), (x,), lambda g: (g * mask,))


def mean(x):
    inv = 1.0 / x.size
    shape, dtype = x.shape, x.dtype
    return make_op_output(
        np.asarray(x.data.mean(), dtype=dtype), (x,),
        lambda g: (np.full(shape, g * dtype.type(inv), dtype=dtype),))


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    _check_dtypes(*tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                i != axis and t.shape[i] != ref[i] for i in range(len(ref))):
            raise ShapeError(f"concat: incompatible {t.shape} vs {ref} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return make_op_output(np.concatenate([t.data for t in tensors], axis=axis),
                          tuple(tensors), vjp)


def reshape(x, shape):
    old = x.shape
    return make_op_output(x.data.reshape(shape), (x,),
                          lambda g: (g.reshape(old),))


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    _check_dtypes(a, b)
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return make_op_output(ad @ bd, (a, b),
                          lambda g: (g @ bd.T, ad.T @ g))


def transpose(a):
    if len(a.shape) != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return make_op_output(a.data.T, (a,), lambda g: (g.T,))


def _softmax(data, axis):
    shifted = data - data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_rows(y):
    if len(y.shape) != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {y.shape}")
    s = _softmax(y.data, axis=1)
    return make_op_output(
        s, (y,), lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),))


def softmax_cols(y):
    if len(y.shape) != 2:
        raise ShapeError(f"softmax_cols expects a matrix, got {y.shape}")
    s = _softmax(y.data, axis=0)
    return make_op_output(
        s, (y,), lambda g: (s * (g - (g * s).sum(axis=0, keepdims=True)),))


# ---------------------------------------------------------------------------
# convolutions

def _check_conv_weights(c_in, weight, bias):
    if len(weight.shape) != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv weight must be [C_out,C_in,k,k], got {weight.shape}")
    c_out, c_in_w, k, _ = weight.shape
    if k % 2 != 1:
        raise ShapeError(f"kernel size must be odd, got {k}")
    if c_in_w != c_in:
        raise ShapeError(f"conv input channels {c_in} vs weight {c_in_w}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv bias must be [{c_out}], got {bias.shape}")
    return c_out, k


def conv2d(x, weight, bias, stride=1, pad=0):
    """Cross-correlation of [C_in,H,W] with [C_out,C_in,k,k] plus bias.

    Zero padding; output H' = (H + 2*pad - k)//stride + 1.
    """
    _check_dtypes(x, weight, bias)
    if len(x.shape) != 3:
        raise ShapeError(f"conv2d input must be [C,H,W], got {x.shape}")
    if pad < 0 or stride < 1:
        raise ShapeError("conv2d needs pad >= 0 and stride >= 1")
    c_in, h, w = x.shape
    c_out, k = _check_conv_weights(c_in, weight, bias)
    ho = backend.conv_out_size(h, k, stride, pad)
    wo = backend.conv_out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {x.shape}")

    cols = backend.im2col(np.ascontiguousarray(x.data), k, stride, pad)
    wmat = weight.data.reshape(c_out, -1)
    out = wmat @ cols
    out += bias.data[:, None]

    def vjp(g):
        gm = np.ascontiguousarray(g.reshape(c_out, -1))
        grad_x = grad_w = grad_b = None
        if x.requires_grad:
            grad_cols = wmat.T @ gm
            grad_x = backend.col2im(grad_cols, c_in, h, w, k, stride, pad)
        if weight.requires_grad:
            grad_w = (gm @ cols.T).reshape(weight.shape)
        if bias.requires_grad:
            grad_b = gm.sum(axis=1)
        return grad_x, grad_w, grad_b

    return make_op_output(out.reshape(c_out, ho, wo), (x, weight, bias), vjp)


def deform_conv2d(x, offsets, weight, bias):
    """Deformable conv: taps displaced per pixel by ``offsets`` ([2*k*k,H,W]).

    Stride 1 with pad k//2, so output is same-size.  Samples are bilinear with
    zeros outside the map; gradients flow to input, offsets, weight and bias.
    """
    _check_dtypes(x, offsets, weight, bias)
    if len(x.shape) != 3:
        raise ShapeError(f"deform_conv2d input must be [C,H,W], got {x.shape}")
    c_in, h, w = x.shape
    c_out, k = _check_conv_weights(c_in, weight, bias)
    if offsets.shape != (2 * k * k, h, w):
        raise ShapeError(
            f"offsets must be [{2 * k * k},{h},{w}], got {offsets.shape}")

    x_c = np.ascontiguousarray(x.data)
    off_c = np.ascontiguousarray(offsets.data)
    cols = backend.deform_im2col(x_c, off_c, k)
    wmat = weight.data.reshape(c_out, -1)
    out = wmat @ cols
    out += bias.data[:, None]

    def vjp(g):
        gm = np.ascontiguousarray(g.reshape(c_out, -1))
        grad_x = grad_off = grad_w = grad_b = None
        if x.requires_grad or offsets.requires_grad:
            grad_cols = np.ascontiguousarray(wmat.T @ gm)
            if x.requires_grad:
                grad_x = backend.deform_col2im_input(grad_cols, c_in, h, w, off_c, k)
            if offsets.requires_grad:
                grad_off = backend.deform_col2im_offsets(grad_cols, x_c, off_c, k)
        if weight.requires_grad:
            grad_w = (gm @ cols.T).reshape(weight.shape)
        if bias.requires_grad:
            grad_b = gm.sum(axis=1)
        return grad_x, grad_off, grad_w, grad_b

    return make_op_output(out.reshape(c_out, h, w), (x, offsets, weight, bias), vjp)


def bilinear_sample(feat, y, x):
    """Sample all channels of [C,H,W] at real coordinates (y, x).

    Coordinates may be floats or single-element tensors; gradients flow to
    the feature map and to tensor-valued coordinates.  Points outside
    [-1, H] x [-1, W] read as zero.
    """
    if len(feat.shape) != 3:
        raise ShapeError(f"bilinear_sample expects [C,H,W], got {feat.shape}")
    c, h, w = feat.shape
    y_t = y if isinstance(y, Tensor) else None
    x_t = x if isinstance(x, Tensor) else None
    py = y_t.item() if y_t is not None else float(y)
    px = x_t.item() if x_t is not None else float(x)

    out = backend.bilinear_sample_one(np.ascontiguousarray(feat.data), py, px)
    y0, x0 = int(np.floor(py)), int(np.floor(px))
    fy, fx = py - y0, px - x0
    corners = []  # (yy, xx, wy, wx)
    for dy in (0, 1):
        for dx in (0, 1):
            yy, xx = y0 + dy, x0 + dx
            if 0 <= yy < h and 0 <= xx < w:
                corners.append((yy, xx, dy, dx))

    parents = [feat] + [t for t in (y_t, x_t) if t is not None]

    def vjp(g):
        grads = []
        if feat.requires_grad:
            gf = np.zeros_like(feat.data)
            for yy, xx, dy, dx in corners:
                wy = fy if dy else 1 - fy
                wx = fx if dx else 1 - fx
                gf[:, yy, xx] = g * feat.dtype.type(wy * wx)
            grads.append(gf)
        else:
            grads.append(None)
        if y_t is not None or x_t is not None:
            vals = {}
            for yy, xx, dy, dx in corners:
                vals[(dy, dx)] = feat.data[:, yy, xx]
            zero = np.zeros(c, dtype=feat.dtype)
            v00 = vals.get((0, 0), zero)
            v01 = vals.get((0, 1), zero)
            v10 = vals.get((1, 0), zero)
            v11 = vals.get((1, 1), zero)
            if y_t is not None:
                dy_val = (g * ((v10 - v00) * (1 - fx) + (v11 - v01) * fx)).sum()
                grads.append(np.full(y_t.shape, dy_val, dtype=y_t.dtype))
            if x_t is not None:
                dx_val = (g * ((v01 - v00) * (1 - fy) + (v11 - v10) * fy)).sum()
                grads.append(np.full(x_t.shape, dx_val, dtype=x_t.dtype))
        return tuple(grads)

    return make_op_output(out, parents, vjp)


# operator sugar on Tensor, matching the functional ops above
Tensor.__add__ = add
Tensor.__sub__ = sub
Tensor.__mul__ = lambda self, other: (
    mul_scalar(self, other) if isinstance(other, (int, float))
    else mul(self, other))
Tensor.__rmul__ = Tensor.__mul__
Tensor.__neg__ = lambda self: mul_scalar(self, -1.0)
