"""NumPy implementations of the spatial convolution kernels.

This is the fallback backend used when the compiled extension is not
available; `dsdcn.kernels` picks between the two at import time.  All
functions operate on C-contiguous NHWC arrays and must match the compiled
backend bit-for-bit in shape and to float rounding in value.

Conventions shared by both backends:

* `conv2d` and `depthwise` are stride-1 cross-correlations with zero
  "same" padding: pad_before = (dilation * (k - 1)) // 2 per axis and
  pad_after makes up the remainder, so output spatial dims equal input
  dims for every dilation.
* `transpose` scatters each input element through the kernel at stride
  offsets and crops (k - stride) rows/cols, (k - stride) // 2 of them
  before, so the output is exactly (stride*h, stride*w).  With this crop
  the operator is the adjoint of a stride-`s` "same" convolution, and at
  stride 1 the adjoint of `conv2d`.
"""

import numpy as np

BACKEND_NAME = "numpy"


def _same_pad(k: int, dilation: int) -> tuple[int, int]:
    total = dilation * (k - 1)
    before = total // 2
    return before, total - before


def _crop(k: int, stride: int) -> tuple[int, int]:
    total = k - stride
    before = total // 2
    return before, total - before


# ---------------------------------------------------------------------------
# standard / dilated convolution
# ---------------------------------------------------------------------------

def conv2d_forward(x, w, b, dilation):
    """x: (n,h,w,ci), w: (kh,kw,ci,co), b: (co,) -> (n,h,w,co)."""
    n, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    pt, _ = _same_pad(kh, dilation)
    pl, _ = _same_pad(kw, dilation)
    y = np.empty((n, h, wd, co), dtype=x.dtype)
    y[...] = b
    for u in range(kh):
        lo_i = max(0, pt - u * dilation)
        hi_i = min(h, h + pt - u * dilation)
        if lo_i >= hi_i:
            continue
        for v in range(kw):
            lo_j = max(0, pl - v * dilation)
            hi_j = min(wd, wd + pl - v * dilation)
            if lo_j >= hi_j:
                continue
            src = x[:, lo_i + u * dilation - pt:hi_i + u * dilation - pt,
                    lo_j + v * dilation - pl:hi_j + v * dilation - pl, :]
            y[:, lo_i:hi_i, lo_j:hi_j, :] += src @ w[u, v]
    return y


def conv2d_backward_data(gy, w, dilation):
    """gy: (n,h,w,co), w: (kh,kw,ci,co) -> gx: (n,h,w,ci)."""
    n, h, wd, co = gy.shape
    kh, kw, ci, _ = w.shape
    pt, _ = _same_pad(kh, dilation)
    pl, _ = _same_pad(kw, dilation)
    gx = np.zeros((n, h, wd, ci), dtype=gy.dtype)
    for u in range(kh):
        lo_i = max(0, pt - u * dilation)
        hi_i = min(h, h + pt - u * dilation)
        if lo_i >= hi_i:
            continue
        for v in range(kw):
            lo_j = max(0, pl - v * dilation)
            hi_j = min(wd, wd + pl - v * dilation)
            if lo_j >= hi_j:
                continue
            gx[:, lo_i + u * dilation - pt:hi_i + u * dilation - pt,
               lo_j + v * dilation - pl:hi_j + v * dilation - pl, :] += \
                gy[:, lo_i:hi_i, lo_j:hi_j, :] @ w[u, v].T
    return gx


def conv2d_backward_weights(x, gy, dilation, kh, kw):
    """Returns (gw, gb) for conv2d_forward."""
    n, h, wd, ci = x.shape
    co = gy.shape[3]
    pt, _ = _same_pad(kh, dilation)
    pl, _ = _same_pad(kw, dilation)
    gw = np.zeros((kh, kw, ci, co), dtype=x.dtype)
    for u in range(kh):
        lo_i = max(0, pt - u * dilation)
        hi_i = min(h, h + pt - u * dilation)
        if lo_i >= hi_i:
            continue
        for v in range(kw):
            lo_j = max(0, pl - v * dilation)
            hi_j = min(wd, wd + pl - v * dilation)
            if lo_j >= hi_j:
                continue
            src = x[:, lo_i + u * dilation - pt:hi_i + u * dilation - pt,
                    lo_j + v * dilation - pl:hi_j + v * dilation - pl, :]
            gw[u, v] = np.tensordot(src, gy[:, lo_i:hi_i, lo_j:hi_j, :],
                                    axes=([0, 1, 2], [0, 1, 2]))
    gb = gy.sum(axis=(0, 1, 2))
    return gw, gb


# ---------------------------------------------------------------------------
# depthwise convolution (one spatial filter per channel, no mixing)
# ---------------------------------------------------------------------------

def depthwise_forward(x, w, b):
    """x: (n,h,w,c), w: (kh,kw,c,1), b: (c,) -> (n,h,w,c)."""
    n, h, wd, c = x.shape
    kh, kw = w.shape[:2]
    pt, _ = _same_pad(kh, 1)
    pl, _ = _same_pad(kw, 1)
    y = np.empty_like(x)
    y[...] = b
    for u in range(kh):
        lo_i = max(0, pt - u)
        hi_i = min(h, h + pt - u)
        if lo_i >= hi_i:
            continue
        for v in range(kw):
            lo_j = max(0, pl - v)
            hi_j = min(wd, wd + pl - v)
            if lo_j >= hi_j:
                continue
            y[:, lo_i:hi_i, lo_j:hi_j, :] += \
                x[:, lo_i + u - pt:hi_i + u - pt,
                  lo_j + v - pl:hi_j + v - pl, :] * w[u, v, :, 0]
    return y


def depthwise_backward_data(gy, w):
    n, h, wd, c = gy.shape
    kh, kw = w.shape[:2]
    pt, _ = _same_pad(kh, 1)
    pl, _ = _same_pad(kw, 1)
    gx = np.zeros_like(gy)
    for u in range(kh):
        lo_i = max(0, pt - u)
        hi_i = min(h, h + pt - u)
        if lo_i >= hi_i:
            continue
        for v in range(kw):
            lo_j = max(0, pl - v)
            hi_j = min(wd, wd + pl - v)
            if lo_j >= hi_j:
                continue
            gx[:, lo_i + u - pt:hi_i + u - pt,
               lo_j + v - pl:hi_j + v - pl, :] += \
                gy[:, lo_i:hi_i, lo_j:hi_j, :] * w[u, v, :, 0]
    return gx


def depthwise_backward_weights(x, gy, kh, kw):
    n, h, wd, c = x.shape
    pt, _ = _same_pad(kh, 1)
    pl, _ = _same_pad(kw, 1)
    gw = np.zeros((kh, kw, c, 1), dtype=x.dtype)
    for u in range(kh):
        lo_i = max(0, pt - u)
        hi_i = min(h, h + pt - u)
        if lo_i >= hi_i:
            continue
        for v in range(kw):
            lo_j = max(0, pl - v)
            hi_j = min(wd, wd + pl - v)
            if lo_j >= hi_j:
                continue
            src = x[:, lo_i + u - pt:hi_i + u - pt,
                    lo_j + v - pl:hi_j + v - pl, :]
            gw[u, v, :, 0] = (src * gy[:, lo_i:hi_i, lo_j:hi_j, :]).sum(
                axis=(0, 1, 2))
    gb = gy.sum(axis=(0, 1, 2))
    return gw, gb


# ---------------------------------------------------------------------------
# transpose convolution (learnable upsampling)
# ---------------------------------------------------------------------------

def transpose_forward(x, w, b, stride):
    """x: (n,h,w,ci), w: (kh,kw,ci,co) -> (n, stride*h, stride*w, co)."""
    n, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    ct, _ = _crop(kh, stride)
    cl, _ = _crop(kw, stride)
    oh, ow = stride * h, stride * wd
    full = np.zeros((n, (h - 1) * stride + kh, (wd - 1) * stride + kw, co),
                    dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            full[:, u:u + (h - 1) * stride + 1:stride,
                 v:v + (wd - 1) * stride + 1:stride, :] += x @ w[u, v]
    y = np.ascontiguousarray(full[:, ct:ct + oh, cl:cl + ow, :])
    y += b
    return y


def transpose_backward_data(gy, w, stride):
    """gy: (n, stride*h, stride*w, co) -> gx: (n,h,w,ci)."""
    kh, kw, ci, co = w.shape
    ct, cb = _crop(kh, stride)
    cl, cr = _crop(kw, stride)
    n = gy.shape[0]
    h = gy.shape[1] // stride
    wd = gy.shape[2] // stride
    gfull = np.zeros((n, (h - 1) * stride + kh, (wd - 1) * stride + kw, co),
                     dtype=gy.dtype)
    gfull[:, ct:ct + stride * h, cl:cl + stride * wd, :] = gy
    gx = np.zeros((n, h, wd, ci), dtype=gy.dtype)
    for u in range(kh):
        for v in range(kw):
            gx += gfull[:, u:u + (h - 1) * stride + 1:stride,
                        v:v + (wd - 1) * stride + 1:stride, :] @ w[u, v].T
    return gx


def transpose_backward_weights(x, gy, stride, kh, kw):
    n, h, wd, ci = x.shape
    co = gy.shape[3]
    ct, _ = _crop(kh, stride)
    cl, _ = _crop(kw, stride)
    gfull = np.zeros((n, (h - 1) * stride + kh, (wd - 1) * stride + kw, co),
                     dtype=gy.dtype)
    gfull[:, ct:ct + stride * h, cl:cl + stride * wd, :] = gy
    gw = np.zeros((kh, kw, ci, co), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            gw[u, v] = np.tensordot(
                x, gfull[:, u:u + (h - 1) * stride + 1:stride,
                         v:v + (wd - 1) * stride + 1:stride, :],
                axes=([0, 1, 2], [0, 1, 2]))
    gb = gy.sum(axis=(0, 1, 2))
    return gw, gb
