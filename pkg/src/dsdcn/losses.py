"""Composite training loss: pixel MSE + spectral angle + per-pixel L2.

Each component is a fused tape op with an analytic gradient, validated
against central finite differences in the test suite.  Pixels are the
first three axes of a Tensor4; spectra run along the channel axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Scalar, ShapeError, Tape, Tensor4

# Cosines are clamped away from +-1 before arccos because the derivative
# diverges there and destabilises training.
SAM_COS_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights: total = mse + lambda1 * sam + lambda2 * l2."""

    lambda1: float = 0.5
    lambda2: float = 0.03

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")


def _check_shapes(y_true: Tensor4, y_pred: Tensor4) -> None:
    if y_true.shape != y_pred.shape:
        raise ShapeError(
            f"shape mismatch: {y_true.shape} vs {y_pred.shape}")


def _squared_error_mean(y_true: Tensor4, y_pred: Tensor4, scale: float,
                        tape: Tape | None) -> Scalar:
    """mean((t - p)^2) over all elements, times `scale`."""
    diff = y_pred.data - y_true.data
    size = diff.size
    s = Scalar(scale * (np.sum(diff * diff) / size))
    if tape is not None and (y_true.requires_grad or y_pred.requires_grad):

        def back():
            g = (2.0 * scale / size) * s.grad * diff
            if y_pred.requires_grad:
                y_pred.accumulate_grad(g.astype(y_pred.dtype, copy=False))
            if y_true.requires_grad:
                y_true.accumulate_grad((-g).astype(y_true.dtype, copy=False))

        tape.record(back)
    return s


def loss_mse(y_true: Tensor4, y_pred: Tensor4,
             tape: Tape | None = None) -> Scalar:
    """Mean squared difference over every element."""
    _check_shapes(y_true, y_pred)
    return _squared_error_mean(y_true, y_pred, 1.0, tape)


def loss_l2(y_true: Tensor4, y_pred: Tensor4,
            tape: Tape | None = None) -> Scalar:
    """Mean over pixels of the squared spectral-difference norm.

    Algebraically identical to channel_count * loss_mse, and computed that
    way so the identity holds bit-exactly.
    """
    _check_shapes(y_true, y_pred)
    return _squared_error_mean(y_true, y_pred, float(y_true.c), tape)


def loss_sam(y_true: Tensor4, y_pred: Tensor4,
             tape: Tape | None = None) -> Scalar:
    """Mean per-pixel angle (radians) between true and predicted spectra.

    Pixels where either spectrum has zero norm contribute 0 while the
    denominator stays at the full pixel count.
    """
    _check_shapes(y_true, y_pred)
    b = y_true.c
    t = y_true.data.reshape(-1, b)
    p = y_pred.data.reshape(-1, b)
    n_pix = t.shape[0]

    dot = np.einsum("ij,ij->i", t, p)
    nt = np.sqrt(np.einsum("ij,ij->i", t, t))
    npred = np.sqrt(np.einsum("ij,ij->i", p, p))
    denom = nt * npred
    valid = denom > 0
    cos_raw = np.zeros(n_pix)
    np.divide(dot, denom, out=cos_raw, where=valid)
    cos = np.clip(cos_raw, -1.0 + SAM_COS_EPS, 1.0 - SAM_COS_EPS)
    theta = np.where(valid, np.arccos(cos), 0.0)
    s = Scalar(theta.sum() / n_pix)

    if tape is not None and (y_true.requires_grad or y_pred.requires_grad):

        def back():
            # d(arccos)/dcos, zeroed where the clamp or the zero-norm
            # convention flattens the loss.
            active = valid & (cos_raw > -1.0 + SAM_COS_EPS) \
                           & (cos_raw < 1.0 - SAM_COS_EPS)
            coef = np.zeros(n_pix)
            np.divide(-1.0, np.sqrt(1.0 - cos * cos), out=coef, where=active)
            coef *= s.grad / n_pix
            safe_denom = np.where(valid, denom, 1.0)
            if y_pred.requires_grad:
                gp = coef[:, None] * (
                    t / safe_denom[:, None]
                    - cos_raw[:, None] * p
                    / np.where(valid, npred * npred, 1.0)[:, None])
                gp[~active] = 0.0
                y_pred.accumulate_grad(
                    gp.reshape(y_pred.shape).astype(y_pred.dtype, copy=False))
            if y_true.requires_grad:
                gt = coef[:, None] * (
                    p / safe_denom[:, None]
                    - cos_raw[:, None] * t
                    / np.where(valid, nt * nt, 1.0)[:, None])
                gt[~active] = 0.0
                y_true.accumulate_grad(
                    gt.reshape(y_true.shape).astype(y_true.dtype, copy=False))

        tape.record(back)
    return s


def loss_total(y_true: Tensor4, y_pred: Tensor4,
               weights: LossWeights = LossWeights(),
               tape: Tape | None = None) -> Scalar:
    """mse + lambda1 * sam + lambda2 * l2, differentiable through all terms."""
    _check_shapes(y_true, y_pred)
    mse = loss_mse(y_true, y_pred, tape)
    sam = loss_sam(y_true, y_pred, tape)
    l2 = loss_l2(y_true, y_pred, tape)
    total = Scalar(mse.value + weights.lambda1 * sam.value
                   + weights.lambda2 * l2.value)
    if tape is not None:

        def back():
            mse.grad += total.grad
            sam.grad += weights.lambda1 * total.grad
            l2.grad += weights.lambda2 * total.grad

        tape.record(back)
    return total
