"""Pure-numpy implementations of the hot inner kernels.

These are the fallback twins of the numba kernels in ``kernels_numba``;
``backend`` picks one set at import time.  Layout conventions shared by both:

* feature maps are ``[C, H, W]`` row-major,
* patch matrices ("cols") are ``[C*k*k, n]`` with row index
  ``c*k*k + ky*k + kx`` and column index ``oy*wo + ox``, so that
  ``weight.reshape(C_out, -1) @ cols`` is the convolution,
* deformable offsets are ``[2*k*k, H, W]`` with channel ``2t`` = dy and
  ``2t + 1`` = dx for tap ``t = ky*k + kx``, in pixels.

Bilinear sampling reads zeros outside the feature map: a corner that falls
out of bounds contributes nothing, so coordinates fully outside
``[-1, H] x [-1, W]`` yield 0.
"""

import numpy as np


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, k, stride, pad):
    """[C,H,W] -> [C*k*k, n] patch matrix for a k x k convolution."""
    c, h, w = x.shape
    ho = conv_out_size(h, k, stride, pad)
    wo = conv_out_size(w, k, stride, pad)
    if pad > 0:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # [C, ho, wo, k, k]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    return np.ascontiguousarray(cols)


def col2im(grad_cols, c, h, w, k, stride, pad):
    """Scatter-add transpose of im2col: [C*k*k, n] -> [C,H,W]."""
    ho = conv_out_size(h, k, stride, pad)
    wo = conv_out_size(w, k, stride, pad)
    gp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=grad_cols.dtype)
    g = grad_cols.reshape(c, k, k, ho, wo)
    for ky in range(k):
        for kx in range(k):
            gp[:, ky:ky + ho * stride:stride, kx:kx + wo * stride:stride] += g[:, ky, kx]
    if pad > 0:
        return gp[:, pad:pad + h, pad:pad + w].copy()
    return gp


def _tap_coords(offsets, h, w, k):
    """Absolute sampling coordinates per tap: two [k*k, H*W] arrays (y, x)."""
    pad = k // 2
    taps = k * k
    oy, ox = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    base_y = oy.reshape(-1)[None, :] + (np.arange(taps) // k - pad)[:, None]
    base_x = ox.reshape(-1)[None, :] + (np.arange(taps) % k - pad)[:, None]
    off = offsets.reshape(taps, 2, h * w)
    py = base_y + off[:, 0]
    px = base_x + off[:, 1]
    return py, px


def _corners(py, px, h, w):
    y0 = np.floor(py)
    x0 = np.floor(px)
    fy = py - y0
    fx = px - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    ys = (y0, y0, y0 + 1, y0 + 1)
    xs = (x0, x0 + 1, x0, x0 + 1)
    ws = ((1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx)
    masks = [((yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)) for yy, xx in zip(ys, xs)]
    return ys, xs, ws, masks, fy, fx


def deform_im2col(x, offsets, k):
    """Bilinear patch gather for deformable conv (stride 1, pad k//2)."""
    c, h, w = x.shape
    taps = k * k
    py, px = _tap_coords(offsets, h, w, k)
    ys, xs, ws, masks, _, _ = _corners(py, px, h, w)
    samples = np.zeros((c, taps, h * w), dtype=x.dtype)
    for yy, xx, wt, m in zip(ys, xs, ws, masks):
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        samples += x[:, yc, xc] * (wt * m).astype(x.dtype)[None]
    return samples.reshape(c * taps, h * w)


def deform_col2im_input(grad_cols, c, h, w, offsets, k):
    """Gradient of deform_im2col w.r.t. the feature map: [C*k*k, n] -> [C,H,W]."""
    taps = k * k
    py, px = _tap_coords(offsets, h, w, k)
    ys, xs, ws, masks, _, _ = _corners(py, px, h, w)
    g = grad_cols.reshape(c, taps, h * w)
    grad_x = np.zeros((c, h * w), dtype=grad_cols.dtype)
    for yy, xx, wt, m in zip(ys, xs, ws, masks):
        flat = np.clip(yy, 0, h - 1) * w + np.clip(xx, 0, w - 1)
        contrib = g * (wt * m).astype(grad_cols.dtype)[None]
        for ch in range(c):
            np.add.at(grad_x[ch], flat.reshape(-1), contrib[ch].reshape(-1))
    return grad_x.reshape(c, h, w)


def deform_col2im_offsets(grad_cols, x, offsets, k):
    """Gradient of deform_im2col w.r.t. the offset map: -> [2*k*k, H, W]."""
    c, h, w = x.shape
    taps = k * k
    py, px = _tap_coords(offsets, h, w, k)
    ys, xs, ws, masks, fy, fx = _corners(py, px, h, w)
    vals = []
    for yy, xx, m in zip(ys, xs, masks):
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        vals.append(x[:, yc, xc] * m.astype(x.dtype)[None])  # [C, taps, n]
    v00, v01, v10, v11 = vals
    dfy = fy.astype(x.dtype)
    dfx = fx.astype(x.dtype)
    # d(sample)/d(py) and /d(px) per channel, then reduce over channels
    dsdy = (v10 - v00) * (1 - dfx)[None] + (v11 - v01) * dfx[None]
    dsdx = (v01 - v00) * (1 - dfy)[None] + (v11 - v10) * dfy[None]
    g = grad_cols.reshape(c, taps, h * w)
    grad_off = np.empty((taps, 2, h * w), dtype=grad_cols.dtype)
    grad_off[:, 0] = (g * dsdy).sum(axis=0)
    grad_off[:, 1] = (g * dsdx).sum(axis=0)
    return grad_off.reshape(2 * taps, h, w)


def bilinear_sample_one(x, py, px):
    """Sample every channel of [C,H,W] at one real-valued point."""
    c, h, w = x.shape
    y0 = int(np.floor(py))
    x0 = int(np.floor(px))
    fy = py - y0
    fx = px - x0
    out = np.zeros(c, dtype=x.dtype)
    for dy, dx, wt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                       (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        yy, xx = y0 + dy, x0 + dx
        if 0 <= yy < h and 0 <= xx < w:
            out += (x[:, yy, xx] * wt).astype(x.dtype)
    return out
