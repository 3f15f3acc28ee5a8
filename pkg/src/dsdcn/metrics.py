"""Reconstruction quality metrics over hyperspectral cubes.

MPSNR and MSSIM average their single-band scores over the spectral axis;
SAM averages the per-pixel spectral angle and is reported in degrees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError

# Zero-error bands would give infinite PSNR; they contribute this cap.
PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    """Flat metric triple; serialises to {mpsnr_db, mssim, sam_deg}."""

    mpsnr_db: float
    mssim: float
    sam_deg: float

    @property
    def sam_rad(self) -> float:
        return math.radians(self.sam_deg)

    def to_json(self) -> str:
        return json.dumps({"mpsnr_db": self.mpsnr_db, "mssim": self.mssim,
                           "sam_deg": self.sam_deg})

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        obj = json.loads(text)
        return cls(mpsnr_db=float(obj["mpsnr_db"]),
                   mssim=float(obj["mssim"]),
                   sam_deg=float(obj["sam_deg"]))


def _cube_array(x) -> np.ndarray:
    """Accept either an HsiCube or a raw (h, w, bands) array."""
    arr = np.asarray(getattr(x, "data", x))
    if arr.ndim != 3:
        raise ShapeError(
            f"expected (h, w, bands) data, got {arr.ndim} dims")
    return arr


def _check_cubes(reference: np.ndarray, estimate: np.ndarray) -> None:
    if reference.shape != estimate.shape:
        raise ShapeError(
            f"cube shapes differ: {reference.shape} vs {estimate.shape}")


def metric_mpsnr(reference, estimate, peak: float = 1.0) -> float:
    """Mean over bands of 10*log10(peak^2 / band MSE), in dB."""
    reference = _cube_array(reference)
    estimate = _cube_array(estimate)
    _check_cubes(reference, estimate)
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    diff = reference.astype(np.float64) - estimate.astype(np.float64)
    mse = np.mean(diff * diff, axis=(0, 1))
    psnr = np.where(mse == 0.0, PSNR_CAP_DB,
                    10.0 * np.log10(peak * peak / np.where(mse == 0, 1, mse)))
    return float(psnr.mean())


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_band(img1: np.ndarray, img2: np.ndarray, peak: float) -> float:
    """Single-scale SSIM with a Gaussian window over valid positions."""
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    view1 = np.lib.stride_tricks.sliding_window_view(
        img1, (SSIM_WINDOW, SSIM_WINDOW))
    view2 = np.lib.stride_tricks.sliding_window_view(
        img2, (SSIM_WINDOW, SSIM_WINDOW))
    mu1 = np.tensordot(view1, win, axes=([2, 3], [0, 1]))
    mu2 = np.tensordot(view2, win, axes=([2, 3], [0, 1]))
    m11 = np.tensordot(view1 * view1, win, axes=([2, 3], [0, 1]))
    m22 = np.tensordot(view2 * view2, win, axes=([2, 3], [0, 1]))
    m12 = np.tensordot(view1 * view2, win, axes=([2, 3], [0, 1]))
    var1 = m11 - mu1 * mu1
    var2 = m22 - mu2 * mu2
    cov = m12 - mu1 * mu2
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    ssim_map = ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) / \
               ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2))
    return float(ssim_map.mean())


def metric_mssim(reference, estimate, peak: float = 1.0) -> float:
    """Mean over bands of single-scale SSIM (11x11 Gaussian, sigma 1.5)."""
    reference = _cube_array(reference)
    estimate = _cube_array(estimate)
    _check_cubes(reference, estimate)
    h, w = reference.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} "
            f"SSIM window")
    ref = reference.astype(np.float64)
    est = estimate.astype(np.float64)
    scores = [_ssim_band(ref[:, :, k], est[:, :, k], peak)
              for k in range(ref.shape[2])]
    return float(np.mean(scores))


def metric_sam(reference, estimate) -> float:
    """Mean per-pixel spectral angle, in degrees.

    Unlike the training loss this clamps cosines to the full [-1, 1], so
    exactly collinear spectra score exactly 0.  Zero-norm pixels
    contribute 0 with the pixel count unchanged.
    """
    reference = _cube_array(reference)
    estimate = _cube_array(estimate)
    _check_cubes(reference, estimate)
    b = reference.shape[2]
    t = reference.reshape(-1, b).astype(np.float64)
    p = estimate.reshape(-1, b).astype(np.float64)
    dot = np.einsum("ij,ij->i", t, p)
    denom = np.sqrt(np.einsum("ij,ij->i", t, t)) \
        * np.sqrt(np.einsum("ij,ij->i", p, p))
    valid = denom > 0
    cos = np.zeros(t.shape[0])
    np.divide(dot, denom, out=cos, where=valid)
    theta = np.where(valid, np.arccos(np.clip(cos, -1.0, 1.0)), 0.0)
    return float(np.degrees(theta.sum() / t.shape[0]))


def metric_report(reference, estimate, peak: float = 1.0) -> MetricReport:
    """All three metrics for one (reference, estimate) cube pair."""
    return MetricReport(mpsnr_db=metric_mpsnr(reference, estimate, peak),
                        mssim=metric_mssim(reference, estimate, peak),
                        sam_deg=metric_sam(reference, estimate))
