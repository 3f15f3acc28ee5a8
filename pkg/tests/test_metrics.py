"""Quality metric oracles: MPSNR, MSSIM, SAM, and report serialization."""

import json
import math

import numpy as np
import pytest

from dsdcn import (MetricReport, ShapeError, metric_mpsnr, metric_mssim,
                   metric_report, metric_sam)
from helpers import ssim_reference


class TestMpsnr:
    def test_uniform_mse_30db(self, rng):
        ref = rng.uniform(0.2, 0.8, size=(8, 8, 4))
        est = ref + math.sqrt(1e-3)
        assert abs(metric_mpsnr(ref, est, peak=1.0) - 30.0) < 1e-9

    def test_identical_capped_at_100(self, rng):
        ref = rng.uniform(size=(6, 6, 3))
        assert metric_mpsnr(ref, ref.copy()) == 100.0

    def test_matches_per_band_oracle(self, rng):
        ref = rng.uniform(size=(7, 5, 4))
        est = ref + rng.normal(scale=0.05, size=ref.shape)
        vals = [10 * math.log10(1.0 / np.mean((ref[..., k] - est[..., k]) ** 2))
                for k in range(4)]
        assert abs(metric_mpsnr(ref, est) - np.mean(vals)) < 1e-12

    def test_strictly_decreasing_in_noise(self, rng):
        ref = rng.uniform(size=(10, 10, 3))
        noise = rng.normal(size=ref.shape)
        scores = [metric_mpsnr(ref, ref + amp * noise)
                  for amp in (0.01, 0.02, 0.05, 0.1)]
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_rejects_bad_peak(self, rng):
        ref = rng.uniform(size=(4, 4, 2))
        with pytest.raises(ValueError):
            metric_mpsnr(ref, ref, peak=0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            metric_mpsnr(np.zeros((4, 4, 2)), np.zeros((4, 4, 3)))


class TestMssim:
    def test_identical_is_one(self, rng):
        ref = rng.uniform(size=(16, 16, 3))
        assert abs(metric_mssim(ref, ref.copy()) - 1.0) < 1e-12

    def test_constant_offset_degrades(self, rng):
        ref = rng.uniform(0.1, 0.6, size=(16, 16, 2))
        assert metric_mssim(ref, ref + 0.3) < 1.0

    def test_matches_straight_line_oracle(self, rng):
        ref = rng.uniform(size=(16, 16, 2))
        est = np.clip(ref + rng.normal(scale=0.1, size=ref.shape), 0, 1)
        expected = np.mean([ssim_reference(ref[..., k], est[..., k])
                            for k in range(2)])
        assert abs(metric_mssim(ref, est) - expected) < 1e-10

    def test_rejects_image_smaller_than_window(self, rng):
        ref = rng.uniform(size=(8, 8, 1))
        with pytest.raises(ValueError):
            metric_mssim(ref, ref)


class TestSam:
    def test_scaled_estimate_is_zero_degrees(self, rng):
        ref = rng.uniform(0.1, 1.0, size=(6, 6, 5))
        assert abs(metric_sam(ref, 2.0 * ref)) < 1e-4

    def test_orthogonal_two_band_fixture(self):
        ref = np.zeros((2, 2, 2))
        est = np.zeros((2, 2, 2))
        ref[..., 0] = 1.0
        est[..., 1] = 1.0
        assert abs(metric_sam(ref, est) - 90.0) < 1e-6

    def test_degrees_are_converted_radians(self, rng):
        ref = rng.uniform(0.1, 1.0, size=(5, 5, 4))
        est = rng.uniform(0.1, 1.0, size=(5, 5, 4))
        deg = metric_sam(ref, est)
        t = ref.reshape(-1, 4)
        p = est.reshape(-1, 4)
        cos = np.sum(t * p, axis=1) / (np.linalg.norm(t, axis=1)
                                       * np.linalg.norm(p, axis=1))
        rad = np.arccos(np.clip(cos, -1, 1)).mean()
        assert abs(deg - math.degrees(rad)) < 1e-9


class TestMetricReport:
    def test_json_keys_exact(self, rng):
        ref = rng.uniform(size=(16, 16, 3))
        report = metric_report(ref, ref.copy())
        obj = json.loads(report.to_json())
        assert set(obj) == {"mpsnr_db", "mssim", "sam_deg"}

    def test_self_evaluation_shortcut(self, rng):
        ref = rng.uniform(size=(16, 16, 3))
        report = metric_report(ref, ref.copy())
        assert report.mpsnr_db == 100.0
        assert abs(report.mssim - 1.0) < 1e-12
        assert abs(report.sam_deg) < 1e-6

    def test_round_trip(self):
        report = MetricReport(mpsnr_db=31.5, mssim=0.95, sam_deg=3.2)
        assert MetricReport.from_json(report.to_json()) == report

    def test_radians_property(self):
        report = MetricReport(mpsnr_db=0.0, mssim=0.0, sam_deg=90.0)
        assert abs(report.sam_rad - math.pi / 2) < 1e-12
