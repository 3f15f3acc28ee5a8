"""Shared test utilities: finite-difference gradient checking, brute-force
convolution oracles, and synthetic fixtures."""

import numpy as np

FD_STEP = 1e-5


def numerical_grad(f, x, step=FD_STEP):
    """Central finite differences of scalar-valued f() w.r.t. array x.

    f must recompute from x's current contents; entries are perturbed in
    place and restored.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f()
        flat[i] = orig - step
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def rel_error(analytic, numeric):
    """Norm-wise relative disagreement between two gradient arrays."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / denom


def conv2d_reference(x, w, b, dilation):
    """Direct summation over every tap; the oracle for conv2d_forward."""
    n, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    pt = (dilation * (kh - 1)) // 2
    pl = (dilation * (kw - 1)) // 2
    y = np.zeros((n, h, wd, co), dtype=x.dtype)
    for nn in range(n):
        for i in range(h):
            for j in range(wd):
                for u in range(kh):
                    for v in range(kw):
                        ii = i + u * dilation - pt
                        jj = j + v * dilation - pl
                        if 0 <= ii < h and 0 <= jj < wd:
                            for c1 in range(ci):
                                for c2 in range(co):
                                    y[nn, i, j, c2] += \
                                        x[nn, ii, jj, c1] * w[u, v, c1, c2]
                for c2 in range(co):
                    y[nn, i, j, c2] += b[c2]
    return y


def strided_conv_reference(x, w, stride):
    """Direct summation stride-s 'same' convolution (no bias); the forward
    operator whose adjoint is the scatter transpose convolution."""
    n, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    pt = (kh - stride) // 2
    pl = (kw - stride) // 2
    oh, ow = h // stride, wd // stride
    y = np.zeros((n, oh, ow, co), dtype=x.dtype)
    for nn in range(n):
        for i in range(oh):
            for j in range(ow):
                for u in range(kh):
                    for v in range(kw):
                        ii = stride * i + u - pt
                        jj = stride * j + v - pl
                        if 0 <= ii < h and 0 <= jj < wd:
                            for c1 in range(ci):
                                for c2 in range(co):
                                    y[nn, i, j, c2] += \
                                        x[nn, ii, jj, c1] * w[u, v, c1, c2]
    return y


def channel_swapped(weight):
    """The same kernel values laid out for the transpose convolution's
    channel convention (its input axis is the forward conv's output)."""
    return np.ascontiguousarray(weight.transpose(0, 1, 3, 2))


def ssim_reference(img1, img2, peak=1.0, window=11, sigma=1.5,
                   k1=0.01, k2=0.03):
    """Straight-line single-band SSIM: explicit loops over every valid
    window position, written independently of the library code."""
    r = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    win /= win.sum()
    h, w = img1.shape
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    scores = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            p1 = img1[i:i + window, j:j + window]
            p2 = img2[i:i + window, j:j + window]
            mu1 = (win * p1).sum()
            mu2 = (win * p2).sum()
            var1 = (win * p1 * p1).sum() - mu1 * mu1
            var2 = (win * p2 * p2).sum() - mu2 * mu2
            cov = (win * p1 * p2).sum() - mu1 * mu2
            scores.append(((2 * mu1 * mu2 + c1) * (2 * cov + c2))
                          / ((mu1 * mu1 + mu2 * mu2 + c1)
                             * (var1 + var2 + c2)))
    return float(np.mean(scores))


def smooth_cube(h=48, w=48, b=16, seed=7, freq=(0.5, 1.5)):
    """Smooth low-frequency synthetic reflectance cube in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy / h
    xx = xx / w
    data = np.empty((h, w, b))
    for k in range(b):
        fy, fx = rng.uniform(*freq, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        data[:, :, k] = (0.5
                         + 0.25 * np.sin(2 * np.pi * (fy * yy + fx * xx)
                                         + phase)
                         + 0.15 * np.cos(2 * np.pi * (k + 1) / b)
                         * (xx - 0.5) * (yy - 0.5) * 4)
    lo, hi = data.min(), data.max()
    return (data - lo) / (hi - lo)
