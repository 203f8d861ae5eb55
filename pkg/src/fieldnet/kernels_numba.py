"""Numba-compiled twins of the kernels in ``kernels_numpy``.

Same contracts and layouts; see that module's docstring.  All loops write
disjoint output elements, so results are deterministic.  The stride-1 path
keeps every inner loop at provable unit stride so LLVM vectorizes it.
"""

import numpy as np
from numba import njit

_jit = njit(cache=True, nogil=True)


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


@_jit
def im2col(x, k, stride, pad):
    c, h, w = x.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    xp = np.zeros((c, hp, wp), dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + w] = x
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    cols = np.empty((c * k * k, ho * wo), dtype=x.dtype)
    if stride == 1:
        for ch in range(c):
            for ky in range(k):
                for kx in range(k):
                    row = ch * k * k + ky * k + kx
                    for oy in range(ho):
                        base = oy * wo
                        ys = oy + ky
                        for ox in range(wo):
                            cols[row, base + ox] = xp[ch, ys, kx + ox]
    else:
        for ch in range(c):
            for ky in range(k):
                for kx in range(k):
                    row = ch * k * k + ky * k + kx
                    for oy in range(ho):
                        base = oy * wo
                        ys = oy * stride + ky
                        for ox in range(wo):
                            cols[row, base + ox] = xp[ch, ys, ox * stride + kx]
    return cols


@_jit
def col2im(grad_cols, c, h, w, k, stride, pad):
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    gp = np.zeros((c, hp, wp), dtype=grad_cols.dtype)
    if stride == 1:
        for ch in range(c):
            for ky in range(k):
                for kx in range(k):
                    row = ch * k * k + ky * k + kx
                    for oy in range(ho):
                        base = oy * wo
                        ys = oy + ky
                        for ox in range(wo):
                            gp[ch, ys, kx + ox] += grad_cols[row, base + ox]
    else:
        for ch in range(c):
            for ky in range(k):
                for kx in range(k):
                    row = ch * k * k + ky * k + kx
                    for oy in range(ho):
                        base = oy * wo
                        ys = oy * stride + ky
                        for ox in range(wo):
                            gp[ch, ys, ox * stride + kx] += grad_cols[row, base + ox]
    if pad > 0:
        return gp[:, pad:pad + h, pad:pad + w].copy()
    return gp


@_jit
def deform_im2col(x, offsets, k):
    c, h, w = x.shape
    taps = k * k
    pad = k // 2
    cols = np.zeros((c * taps, h * w), dtype=x.dtype)
    for oy in range(h):
        for ox in range(w):
            p = oy * w + ox
            for t in range(taps):
                py = oy + t // k - pad + offsets[2 * t, oy, ox]
                px = ox + t % k - pad + offsets[2 * t + 1, oy, ox]
                y0 = int(np.floor(py))
                x0 = int(np.floor(px))
                fy = py - y0
                fx = px - x0
                w00 = (1.0 - fy) * (1.0 - fx)
                w01 = (1.0 - fy) * fx
                w10 = fy * (1.0 - fx)
                w11 = fy * fx
                in00 = 0 <= y0 < h and 0 <= x0 < w
                in01 = 0 <= y0 < h and 0 <= x0 + 1 < w
                in10 = 0 <= y0 + 1 < h and 0 <= x0 < w
                in11 = 0 <= y0 + 1 < h and 0 <= x0 + 1 < w
                for ch in range(c):
                    v = 0.0
                    if in00:
                        v += w00 * x[ch, y0, x0]
                    if in01:
                        v += w01 * x[ch, y0, x0 + 1]
                    if in10:
                        v += w10 * x[ch, y0 + 1, x0]
                    if in11:
                        v += w11 * x[ch, y0 + 1, x0 + 1]
                    cols[ch * taps + t, p] = v
    return cols


@_jit
def deform_col2im_input(grad_cols, c, h, w, offsets, k):
    taps = k * k
    pad = k // 2
    grad_x = np.zeros((c, h, w), dtype=grad_cols.dtype)
    for oy in range(h):
        for ox in range(w):
            p = oy * w + ox
            for t in range(taps):
                py = oy + t // k - pad + offsets[2 * t, oy, ox]
                px = ox + t % k - pad + offsets[2 * t + 1, oy, ox]
                y0 = int(np.floor(py))
                x0 = int(np.floor(px))
                fy = py - y0
                fx = px - x0
                w00 = (1.0 - fy) * (1.0 - fx)
                w01 = (1.0 - fy) * fx
                w10 = fy * (1.0 - fx)
                w11 = fy * fx
                in00 = 0 <= y0 < h and 0 <= x0 < w
                in01 = 0 <= y0 < h and 0 <= x0 + 1 < w
                in10 = 0 <= y0 + 1 < h and 0 <= x0 < w
                in11 = 0 <= y0 + 1 < h and 0 <= x0 + 1 < w
                for ch in range(c):
                    g = grad_cols[ch * taps + t, p]
                    if in00:
                        grad_x[ch, y0, x0] += w00 * g
                    if in01:
                        grad_x[ch, y0, x0 + 1] += w01 * g
                    if in10:
                        grad_x[ch, y0 + 1, x0] += w10 * g
                    if in11:
                        grad_x[ch, y0 + 1, x0 + 1] += w11 * g
    return grad_x


@_jit
def deform_col2im_offsets(grad_cols, x, offsets, k):
    c, h, w = x.shape
    taps = k * k
    pad = k // 2
    grad_off = np.zeros((2 * taps, h, w), dtype=grad_cols.dtype)
    for oy in range(h):
        for ox in range(w):
            p = oy * w + ox
            for t in range(taps):
                py = oy + t // k - pad + offsets[2 * t, oy, ox]
                px = ox + t % k - pad + offsets[2 * t + 1, oy, ox]
                y0 = int(np.floor(py))
                x0 = int(np.floor(px))
                fy = py - y0
                fx = px - x0
                in00 = 0 <= y0 < h and 0 <= x0 < w
                in01 = 0 <= y0 < h and 0 <= x0 + 1 < w
                in10 = 0 <= y0 + 1 < h and 0 <= x0 < w
                in11 = 0 <= y0 + 1 < h and 0 <= x0 + 1 < w
                gy = 0.0
                gx = 0.0
                for ch in range(c):
                    v00 = x[ch, y0, x0] if in00 else 0.0
                    v01 = x[ch, y0, x0 + 1] if in01 else 0.0
                    v10 = x[ch, y0 + 1, x0] if in10 else 0.0
                    v11 = x[ch, y0 + 1, x0 + 1] if in11 else 0.0
                    g = grad_cols[ch * taps + t, p]
                    gy += g * ((v10 - v00) * (1.0 - fx) + (v11 - v01) * fx)
                    gx += g * ((v01 - v00) * (1.0 - fy) + (v11 - v10) * fy)
                grad_off[2 * t, oy, ox] = gy
                grad_off[2 * t + 1, oy, ox] = gx
    return grad_off


@_jit
def bilinear_sample_one(x, py, px):
    c, h, w = x.shape
    y0 = int(np.floor(py))
    x0 = int(np.floor(px))
    fy = py - y0
    fx = px - x0
    out = np.zeros(c, dtype=x.dtype)
    for dy in range(2):
        for dx in range(2):
            yy = y0 + dy
            xx = x0 + dx
            if 0 <= yy < h and 0 <= xx < w:
                wy = fy if dy == 1 else 1.0 - fy
                wx = fx if dx == 1 else 1.0 - fx
                for ch in range(c):
                    out[ch] += wy * wx * x[ch, yy, xx]
    return out
