"""Differentiable array ops with explicit forward/backward pairs.

Everything works on NHWC float arrays and stays in the caller's dtype, so
the same code runs in 32-bit for training and 64-bit for gradient checks.
Each forward returns (output, cache); the matching backward consumes the
upstream gradient plus that cache. No tape — callers wire the chain.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from ..errors import KernelTooLarge, ShapeMismatch


def conv2d_forward(x, w, b, stride=1, dilation=1, padding=0):
    """Cross-correlate x (n,h,w,ci) with w (kh,kw,ci,co) plus bias (co,).

    Implemented as a sum over kernel offsets: each offset contributes one
    strided view of the padded input times a (ci, co) weight slice.
    """
    n, h_in, w_in, ci = x.shape
    kh, kw, wci, co = w.shape
    if wci != ci:
        raise ShapeMismatch(f"conv expects {wci} input channels, got {ci}")
    p, s, d = padding, stride, dilation
    oh = (h_in + 2 * p - d * (kh - 1) - 1) // s + 1
    ow = (w_in + 2 * p - d * (kw - 1) - 1) // s + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"conv output would be {oh}x{ow} for input {h_in}x{w_in}")
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    out = np.empty((n, oh, ow, co), dtype=x.dtype)
    out[...] = b
    for ky in range(kh):
        for kx in range(kw):
            view = xp[:, ky * d : ky * d + s * (oh - 1) + 1 : s,
                      kx * d : kx * d + s * (ow - 1) + 1 : s, :]
            out += view @ w[ky, kx]
    cache = (xp, w, x.shape, (p, s, d), (oh, ow))
    return out, cache


def conv2d_backward(dout, cache):
    """Gradients of conv2d_forward w.r.t. input, weights, bias."""
    xp, w, x_shape, (p, s, d), (oh, ow) = cache
    kh, kw, ci, co = w.shape
    db = dout.sum(axis=(0, 1, 2))
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for ky in range(kh):
        for kx in range(kw):
            sy = slice(ky * d, ky * d + s * (oh - 1) + 1, s)
            sx = slice(kx * d, kx * d + s * (ow - 1) + 1, s)
            view = xp[:, sy, sx, :]
            # (n*oh*ow, ci)^T @ (n*oh*ow, co) keeps the reduction order fixed.
            dw[ky, kx] = view.reshape(-1, ci).T @ dout.reshape(-1, co)
            dxp[:, sy, sx, :] += dout @ w[ky, kx].T
    dx = dxp[:, p : p + x_shape[1], p : p + x_shape[2], :] if p else dxp
    return dx, dw, db


def dynamic_depthwise_forward(x, filters):
    """Per-sample depthwise cross-correlation.

    x: (n, h, w, c); filters: (n, k, k, c) — sample i's channel q is
    filtered by filters[i, :, :, q] with zero padding (k-1)//2, stride 1.
    """
    n, h, w, c = x.shape
    fn, kh, kw, fc = filters.shape
    if fn != n or fc != c or kh != kw:
        raise ShapeMismatch(f"filter bank {filters.shape} does not match input {x.shape}")
    if kh % 2 == 0:
        raise ShapeMismatch(f"dynamic filter size must be odd, got {kh}")
    p = (kh - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    out = np.zeros_like(x)
    for dy in range(kh):
        for dx in range(kw):
            out += xp[:, dy : dy + h, dx : dx + w, :] * filters[:, dy, dx][:, None, None, :]
    return out, (xp, filters, (h, w), p)


def dynamic_depthwise_backward(dout, cache):
    xp, filters, (h, w), p = cache
    _, kh, kw, _ = filters.shape
    dxp = np.zeros_like(xp)
    dfilters = np.zeros_like(filters)
    for dy in range(kh):
        for dx in range(kw):
            dxp[:, dy : dy + h, dx : dx + w, :] += dout * filters[:, dy, dx][:, None, None, :]
            dfilters[:, dy, dx] = (dout * xp[:, dy : dy + h, dx : dx + w, :]).sum(axis=(1, 2))
    dx = dxp[:, p : p + h, p : p + w, :] if p else dxp
    return dx, dfilters


def pool_windows(size: int, k: int) -> list[tuple[int, int]]:
    """Adaptive-pool window [lo, hi) per output index; windows may overlap."""
    return [((i * size) // k, -((-(i + 1) * size) // k)) for i in range(k)]


def adaptive_avg_pool_forward(x, k: int):
    """Average-pool (n,h,w,c) onto a k x k grid of data-dependent windows."""
    n, h, w, c = x.shape
    if k < 1:
        raise KernelTooLarge(f"pool size must be >= 1, got {k}")
    if k > min(h, w):
        raise KernelTooLarge(f"pool size {k} exceeds feature map {h}x{w}")
    rows, cols = pool_windows(h, k), pool_windows(w, k)
    out = np.empty((n, k, k, c), dtype=x.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, i, j] = x[:, r0:r1, c0:c1].mean(axis=(1, 2))
    return out, (x.shape, rows, cols)


def adaptive_avg_pool_backward(dout, cache):
    x_shape, rows, cols = cache
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            area = (r1 - r0) * (c1 - c0)
            dx[:, r0:r1, c0:c1] += dout[:, i, j][:, None, None, :] / area
    return dx


_RESIZE_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic interpolation matrix for half-pixel-centered bilinear."""
    key = (n_in, n_out)
    if key not in _RESIZE_CACHE:
        m = np.zeros((n_out, n_in))
        scale = n_in / n_out
        for o in range(n_out):
            src = (o + 0.5) * scale - 0.5
            i0 = math.floor(src)
            t = src - i0
            lo = min(max(i0, 0), n_in - 1)
            hi = min(max(i0 + 1, 0), n_in - 1)
            m[o, lo] += 1.0 - t
            m[o, hi] += t
        _RESIZE_CACHE[key] = m
    return _RESIZE_CACHE[key]


def bilinear_resize_forward(x, out_h: int, out_w: int):
    """Resize (n,h,w,c) to (n,out_h,out_w,c) by separable linear interpolation."""
    n, h, w, c = x.shape
    rh = _resize_matrix(h, out_h).astype(x.dtype)
    rw = _resize_matrix(w, out_w).astype(x.dtype)
    tmp = np.einsum("oi,nijc->nojc", rh, x, optimize=True)
    out = np.einsum("pj,nojc->nopc", rw, tmp, optimize=True)
    return out, (rh, rw)


def bilinear_resize_backward(dout, cache):
    rh, rw = cache
    tmp = np.einsum("pj,nopc->nojc", rw, dout, optimize=True)
    return np.einsum("oi,nojc->nijc", rh, tmp, optimize=True)


def elu_forward(x):
    """ELU with alpha=1; smooth at 0, so finite-difference checks stay clean."""
    neg = np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg)
    return out, neg


def elu_backward(dout, neg):
    # d/dx = 1 for x > 0 and e^x below; expm1(min(x,0)) + 1 covers both.
    return dout * (neg + 1.0)


def sigmoid(z):
    return expit(z)


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy on logits; returns (loss, dloss/dlogits).

    Uses max(z,0) - z*t + log1p(exp(-|z|)), which never overflows.
    """
    if logits.shape != targets.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    z, t = logits, targets
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    dz = (expit(z) - t) / z.size
    return float(per.mean()), dz
