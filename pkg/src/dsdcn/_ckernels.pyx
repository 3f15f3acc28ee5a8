# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the spatial convolution kernels.

Same contracts as `dsdcn._pykernels` (the authoritative docstring lives
there): stride-1 "same" cross-correlation for conv2d/depthwise, scatter
transpose convolution with symmetric (k - stride) crop.  Loops are
arranged so the innermost channel walks are branch-free and contiguous,
which the C compiler turns into SIMD AXPY/dot kernels.  Specialised for
float32 and float64 NHWC memoryviews.
"""

import numpy as np

BACKEND_NAME = "compiled"

ctypedef fused real:
    float
    double


cdef inline object _np_dtype(bint is_double):
    return np.float64 if is_double else np.float32


cdef inline Py_ssize_t _imax(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a > b else b


cdef inline Py_ssize_t _imin(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a < b else b


# ---------------------------------------------------------------------------
# standard / dilated convolution
# ---------------------------------------------------------------------------

def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                   real[::1] b, int dilation):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], co = w.shape[3]
    cdef Py_ssize_t pt = (dilation * (kh - 1)) // 2
    cdef Py_ssize_t pl = (dilation * (kw - 1)) // 2
    y_arr = np.empty((n, h, wd, co), dtype=_np_dtype(real is double))
    cdef real[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t nn, i, j, u, v, c_in, c_out, ii, jj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    cdef real xv
    with nogil:
        for nn in range(n):
            for i in range(h):
                for j in range(wd):
                    for c_out in range(co):
                        y[nn, i, j, c_out] = b[c_out]
            for u in range(kh):
                i_lo = _imax(0, pt - u * dilation)
                i_hi = _imin(h, h + pt - u * dilation)
                for v in range(kw):
                    j_lo = _imax(0, pl - v * dilation)
                    j_hi = _imin(wd, wd + pl - v * dilation)
                    for i in range(i_lo, i_hi):
                        ii = i + u * dilation - pt
                        for j in range(j_lo, j_hi):
                            jj = j + v * dilation - pl
                            for c_in in range(ci):
                                xv = x[nn, ii, jj, c_in]
                                for c_out in range(co):
                                    y[nn, i, j, c_out] += xv * w[u, v, c_in, c_out]
    return y_arr


def conv2d_backward_data(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                         int dilation):
    cdef Py_ssize_t n = gy.shape[0], h = gy.shape[1], wd = gy.shape[2]
    cdef Py_ssize_t co = gy.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2]
    cdef Py_ssize_t pt = (dilation * (kh - 1)) // 2
    cdef Py_ssize_t pl = (dilation * (kw - 1)) // 2
    gx_arr = np.zeros((n, h, wd, ci), dtype=_np_dtype(real is double))
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t nn, i, j, u, v, c_in, c_out, ii, jj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    cdef real acc
    with nogil:
        for nn in range(n):
            for u in range(kh):
                i_lo = _imax(0, pt - u * dilation)
                i_hi = _imin(h, h + pt - u * dilation)
                for v in range(kw):
                    j_lo = _imax(0, pl - v * dilation)
                    j_hi = _imin(wd, wd + pl - v * dilation)
                    for i in range(i_lo, i_hi):
                        ii = i + u * dilation - pt
                        for j in range(j_lo, j_hi):
                            jj = j + v * dilation - pl
                            for c_in in range(ci):
                                acc = 0
                                for c_out in range(co):
                                    acc += gy[nn, i, j, c_out] * w[u, v, c_in, c_out]
                                gx[nn, ii, jj, c_in] += acc
    return gx_arr


def conv2d_backward_weights(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                            int dilation, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ci = x.shape[3], co = gy.shape[3]
    cdef Py_ssize_t pt = (dilation * (kh - 1)) // 2
    cdef Py_ssize_t pl = (dilation * (kw - 1)) // 2
    dtype = _np_dtype(real is double)
    gw_arr = np.zeros((kh, kw, ci, co), dtype=dtype)
    gb_arr = np.zeros(co, dtype=dtype)
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t nn, i, j, u, v, c_in, c_out, ii, jj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    cdef real xv
    with nogil:
        for nn in range(n):
            for i in range(h):
                for j in range(wd):
                    for c_out in range(co):
                        gb[c_out] += gy[nn, i, j, c_out]
            for u in range(kh):
                i_lo = _imax(0, pt - u * dilation)
                i_hi = _imin(h, h + pt - u * dilation)
                for v in range(kw):
                    j_lo = _imax(0, pl - v * dilation)
                    j_hi = _imin(wd, wd + pl - v * dilation)
                    for i in range(i_lo, i_hi):
                        ii = i + u * dilation - pt
                        for j in range(j_lo, j_hi):
                            jj = j + v * dilation - pl
                            for c_in in range(ci):
                                xv = x[nn, ii, jj, c_in]
                                for c_out in range(co):
                                    gw[u, v, c_in, c_out] += xv * gy[nn, i, j, c_out]
    return gw_arr, gb_arr


# ---------------------------------------------------------------------------
# depthwise convolution
# ---------------------------------------------------------------------------

def depthwise_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                      real[::1] b):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t c = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1]
    cdef Py_ssize_t pt = (kh - 1) // 2, pl = (kw - 1) // 2
    y_arr = np.empty((n, h, wd, c), dtype=_np_dtype(real is double))
    cdef real[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t nn, i, j, u, v, cc, ii, jj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    with nogil:
        for nn in range(n):
            for i in range(h):
                for j in range(wd):
                    for cc in range(c):
                        y[nn, i, j, cc] = b[cc]
            for u in range(kh):
                i_lo = _imax(0, pt - u)
                i_hi = _imin(h, h + pt - u)
                for v in range(kw):
                    j_lo = _imax(0, pl - v)
                    j_hi = _imin(wd, wd + pl - v)
                    for i in range(i_lo, i_hi):
                        ii = i + u - pt
                        for j in range(j_lo, j_hi):
                            jj = j + v - pl
                            for cc in range(c):
                                y[nn, i, j, cc] += x[nn, ii, jj, cc] * w[u, v, cc, 0]
    return y_arr


def depthwise_backward_data(real[:, :, :, ::1] gy, real[:, :, :, ::1] w):
    cdef Py_ssize_t n = gy.shape[0], h = gy.shape[1], wd = gy.shape[2]
    cdef Py_ssize_t c = gy.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1]
    cdef Py_ssize_t pt = (kh - 1) // 2, pl = (kw - 1) // 2
    gx_arr = np.zeros((n, h, wd, c), dtype=_np_dtype(real is double))
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t nn, i, j, u, v, cc, ii, jj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    with nogil:
        for nn in range(n):
            for u in range(kh):
                i_lo = _imax(0, pt - u)
                i_hi = _imin(h, h + pt - u)
                for v in range(kw):
                    j_lo = _imax(0, pl - v)
                    j_hi = _imin(wd, wd + pl - v)
                    for i in range(i_lo, i_hi):
                        ii = i + u - pt
                        for j in range(j_lo, j_hi):
                            jj = j + v - pl
                            for cc in range(c):
                                gx[nn, ii, jj, cc] += gy[nn, i, j, cc] * w[u, v, cc, 0]
    return gx_arr


def depthwise_backward_weights(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                               int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t c = x.shape[3]
    cdef Py_ssize_t pt = (kh - 1) // 2, pl = (kw - 1) // 2
    dtype = _np_dtype(real is double)
    gw_arr = np.zeros((kh, kw, c, 1), dtype=dtype)
    gb_arr = np.zeros(c, dtype=dtype)
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t nn, i, j, u, v, cc, ii, jj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    with nogil:
        for nn in range(n):
            for i in range(h):
                for j in range(wd):
                    for cc in range(c):
                        gb[cc] += gy[nn, i, j, cc]
            for u in range(kh):
                i_lo = _imax(0, pt - u)
                i_hi = _imin(h, h + pt - u)
                for v in range(kw):
                    j_lo = _imax(0, pl - v)
                    j_hi = _imin(wd, wd + pl - v)
                    for i in range(i_lo, i_hi):
                        ii = i + u - pt
                        for j in range(j_lo, j_hi):
                            jj = j + v - pl
                            for cc in range(c):
                                gw[u, v, cc, 0] += x[nn, ii, jj, cc] * gy[nn, i, j, cc]
    return gw_arr, gb_arr


# ---------------------------------------------------------------------------
# transpose convolution
# ---------------------------------------------------------------------------

cdef inline Py_ssize_t _ceil_div_nonneg(Py_ssize_t a, Py_ssize_t s) noexcept nogil:
    return (a + s - 1) // s if a > 0 else 0


def transpose_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                      real[::1] b, int stride):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], co = w.shape[3]
    cdef Py_ssize_t ct = (kh - stride) // 2, cl = (kw - stride) // 2
    cdef Py_ssize_t oh = stride * h, ow = stride * wd
    y_arr = np.empty((n, oh, ow, co), dtype=_np_dtype(real is double))
    cdef real[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t nn, i, j, u, v, c_in, c_out, oi, oj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    cdef real xv
    with nogil:
        for nn in range(n):
            for oi in range(oh):
                for oj in range(ow):
                    for c_out in range(co):
                        y[nn, oi, oj, c_out] = b[c_out]
            for u in range(kh):
                # valid i: 0 <= stride*i + u - ct < oh
                i_lo = _ceil_div_nonneg(ct - u, stride)
                i_hi = _imin(h, _ceil_div_nonneg(oh + ct - u, stride))
                for v in range(kw):
                    j_lo = _ceil_div_nonneg(cl - v, stride)
                    j_hi = _imin(wd, _ceil_div_nonneg(ow + cl - v, stride))
                    for i in range(i_lo, i_hi):
                        oi = stride * i + u - ct
                        for j in range(j_lo, j_hi):
                            oj = stride * j + v - cl
                            for c_in in range(ci):
                                xv = x[nn, i, j, c_in]
                                for c_out in range(co):
                                    y[nn, oi, oj, c_out] += xv * w[u, v, c_in, c_out]
    return y_arr


def transpose_backward_data(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                            int stride):
    cdef Py_ssize_t n = gy.shape[0], oh = gy.shape[1], ow = gy.shape[2]
    cdef Py_ssize_t co = gy.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2]
    cdef Py_ssize_t ct = (kh - stride) // 2, cl = (kw - stride) // 2
    cdef Py_ssize_t h = oh // stride, wd = ow // stride
    gx_arr = np.zeros((n, h, wd, ci), dtype=_np_dtype(real is double))
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t nn, i, j, u, v, c_in, c_out, oi, oj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    cdef real acc
    with nogil:
        for nn in range(n):
            for u in range(kh):
                i_lo = _ceil_div_nonneg(ct - u, stride)
                i_hi = _imin(h, _ceil_div_nonneg(oh + ct - u, stride))
                for v in range(kw):
                    j_lo = _ceil_div_nonneg(cl - v, stride)
                    j_hi = _imin(wd, _ceil_div_nonneg(ow + cl - v, stride))
                    for i in range(i_lo, i_hi):
                        oi = stride * i + u - ct
                        for j in range(j_lo, j_hi):
                            oj = stride * j + v - cl
                            for c_in in range(ci):
                                acc = 0
                                for c_out in range(co):
                                    acc += gy[nn, oi, oj, c_out] * w[u, v, c_in, c_out]
                                gx[nn, i, j, c_in] += acc
    return gx_arr


def transpose_backward_weights(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                               int stride, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ci = x.shape[3], co = gy.shape[3]
    cdef Py_ssize_t ct = (kh - stride) // 2, cl = (kw - stride) // 2
    cdef Py_ssize_t oh = gy.shape[1], ow = gy.shape[2]
    dtype = _np_dtype(real is double)
    gw_arr = np.zeros((kh, kw, ci, co), dtype=dtype)
    gb_arr = np.zeros(co, dtype=dtype)
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t nn, i, j, u, v, c_in, c_out, oi, oj
    cdef Py_ssize_t i_lo, i_hi, j_lo, j_hi
    cdef real xv
    with nogil:
        for nn in range(n):
            for oi in range(oh):
                for oj in range(ow):
                    for c_out in range(co):
                        gb[c_out] += gy[nn, oi, oj, c_out]
            for u in range(kh):
                i_lo = _ceil_div_nonneg(ct - u, stride)
                i_hi = _imin(h, _ceil_div_nonneg(oh + ct - u, stride))
                for v in range(kw):
                    j_lo = _ceil_div_nonneg(cl - v, stride)
                    j_hi = _imin(wd, _ceil_div_nonneg(ow + cl - v, stride))
                    for i in range(i_lo, i_hi):
                        oi = stride * i + u - ct
                        for j in range(j_lo, j_hi):
                            oj = stride * j + v - cl
                            for c_in in range(ci):
                                xv = x[nn, i, j, c_in]
                                for c_out in range(co):
                                    gw[u, v, c_in, c_out] += xv * gy[nn, oi, oj, c_out]
    return gw_arr, gb_arr
