"""Composite loss values, identities, and gradient checks."""

import math

import numpy as np
import pytest

from dsdcn import (LossWeights, ShapeError, Tape, Tensor4, backward,
                   loss_l2, loss_mse, loss_sam, loss_total)
from helpers import numerical_grad, rel_error

TOL = 1e-4


def pair(rng, shape=(1, 2, 2, 3)):
    return rng.normal(size=shape), rng.normal(size=shape)


class TestMse:
    def test_zero_on_identical(self, rng):
        t, _ = pair(rng)
        assert loss_mse(Tensor4(t), Tensor4(t.copy())).value == 0.0

    def test_unit_difference(self):
        t = Tensor4(np.zeros((1, 1, 2, 1)))
        p = Tensor4(np.ones((1, 1, 2, 1)))
        assert loss_mse(t, p).value == 1.0

    def test_matches_elementwise_oracle(self, rng):
        t, p = pair(rng, (2, 3, 4, 5))
        expected = float(np.sum((t - p) ** 2) / t.size)
        assert abs(loss_mse(Tensor4(t), Tensor4(p)).value - expected) < 1e-14

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            loss_mse(Tensor4(np.zeros((1, 2, 2, 2))),
                     Tensor4(np.zeros((1, 2, 2, 3))))


class TestSam:
    def test_collinear_spectra_near_zero(self, rng):
        t = np.abs(rng.normal(size=(1, 3, 3, 4))) + 0.1
        val = loss_sam(Tensor4(t), Tensor4(2.5 * t)).value
        # only the arccos clamp keeps this away from exactly zero
        assert 0.0 <= val < 1e-3

    def test_orthogonal_pixel(self):
        t = Tensor4(np.array([1.0, 0.0]).reshape(1, 1, 1, 2))
        p = Tensor4(np.array([0.0, 1.0]).reshape(1, 1, 1, 2))
        assert abs(loss_sam(t, p).value - math.pi / 2) < 1e-12

    def test_45_degree_pixel(self):
        t = Tensor4(np.array([1.0, 0.0]).reshape(1, 1, 1, 2))
        p = Tensor4(np.array([1.0, 1.0]).reshape(1, 1, 1, 2))
        assert abs(loss_sam(t, p).value - math.pi / 4) < 1e-12

    def test_zero_norm_pixels_contribute_zero(self):
        t = np.zeros((1, 1, 2, 2))
        p = np.zeros((1, 1, 2, 2))
        t[0, 0, 0] = [1.0, 0.0]
        p[0, 0, 0] = [0.0, 1.0]
        # second pixel is all-zero in both: contributes 0, N stays 2
        val = loss_sam(Tensor4(t), Tensor4(p)).value
        assert abs(val - math.pi / 4) < 1e-12

    def test_bounded_by_pi(self, rng):
        t, p = pair(rng, (2, 4, 4, 3))
        val = loss_sam(Tensor4(t), Tensor4(p)).value
        assert 0.0 <= val <= math.pi


class TestL2:
    def test_zero_on_identical(self, rng):
        t, _ = pair(rng)
        assert loss_l2(Tensor4(t), Tensor4(t.copy())).value == 0.0

    def test_single_pixel_norm(self):
        t = Tensor4(np.zeros((1, 1, 1, 2)))
        p = Tensor4(np.array([1.0, 2.0]).reshape(1, 1, 1, 2))
        assert loss_l2(t, p).value == 5.0

    def test_exact_channel_multiple_of_mse(self, rng):
        t, p = pair(rng, (2, 3, 3, 7))
        tt, pp = Tensor4(t), Tensor4(p)
        assert loss_l2(tt, pp).value == 7 * loss_mse(tt, pp).value

    def test_matches_per_pixel_oracle(self, rng):
        t, p = pair(rng, (1, 4, 4, 3))
        diff = (t - p).reshape(-1, 3)
        expected = float(np.mean(np.sum(diff * diff, axis=1)))
        assert abs(loss_l2(Tensor4(t), Tensor4(p)).value - expected) < 1e-12


class TestTotal:
    def test_composition_with_default_weights(self, rng):
        t, p = pair(rng, (1, 3, 3, 4))
        tt, pp = Tensor4(t), Tensor4(p)
        m = loss_mse(tt, pp).value
        s = loss_sam(tt, pp).value
        l2 = loss_l2(tt, pp).value
        total = loss_total(tt, pp, LossWeights()).value
        assert abs(total - (m + 0.5 * s + 0.03 * l2)) < 1e-12

    def test_zero_weights_reduce_to_mse(self, rng):
        t, p = pair(rng)
        tt, pp = Tensor4(t), Tensor4(p)
        w = LossWeights(lambda1=0.0, lambda2=0.0)
        assert loss_total(tt, pp, w).value == loss_mse(tt, pp).value

    def test_zero_on_identical_for_any_weights(self, rng):
        # identical inputs null the mse/l2 terms; the sam term carries the
        # arccos-clamp floor of arccos(1 - 1e-7) < 1e-3 rad per pixel
        t, _ = pair(rng)
        tt = Tensor4(t)
        for w in (LossWeights(), LossWeights(0.0, 0.0), LossWeights(2.0, 1.0)):
            total = loss_total(tt, Tensor4(t.copy()), w).value
            assert 0.0 <= total <= w.lambda1 * 1e-3

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda1=-0.1)


class TestLossGradients:
    @pytest.mark.parametrize("loss_fn", [loss_mse, loss_sam, loss_l2])
    def test_component_gradients(self, rng, loss_fn):
        t, p = pair(rng)
        self._check(loss_fn, t, p)

    def test_total_gradient(self, rng):
        t, p = pair(rng)
        self._check(lambda a, b, tape=None:
                    loss_total(a, b, LossWeights(), tape), t, p)

    def test_total_gradient_through_clamp_region(self, rng):
        # collinear pixels sit in the clamped flat of arccos: both the
        # analytic gradient and finite differences must see zero slope
        t = np.abs(rng.normal(size=(1, 2, 2, 3))) + 0.5
        p = 2.0 * t
        self._check(lambda a, b, tape=None:
                    loss_total(a, b, LossWeights(), tape), t, p)

    @staticmethod
    def _check(loss_fn, t_data, p_data):
        t = Tensor4(t_data, requires_grad=True)
        p = Tensor4(p_data, requires_grad=True)
        tape = Tape()
        backward(tape, loss_fn(t, p, tape=tape))

        def run_p():
            return loss_fn(Tensor4(t_data), Tensor4(p_data)).value

        num_p = numerical_grad(run_p, p_data)
        num_t = numerical_grad(run_p, t_data)
        if np.linalg.norm(num_p) < 1e-8:
            assert np.linalg.norm(p.grad) < 1e-8
            assert np.linalg.norm(t.grad) < 1e-8
        else:
            assert rel_error(p.grad, num_p) < TOL
            assert rel_error(t.grad, num_t) < TOL
