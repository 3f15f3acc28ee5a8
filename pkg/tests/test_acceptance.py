"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion.
"""

import json
import math
import time

import numpy as np

from dsdcn import (AdamState, ConvKernel, DsBlockParams, DsdcnConfig,
                   HsiCube, LossWeights, Tape, Tensor4, TrainConfig, add,
                   area_downsample, backward, band_group_extract,
                   band_group_merge, band_group_partition, concat_channels,
                   conv2d, adam_step, depthwise_conv2d,
                   dilated_fusion_forward, ds_block_forward, dsdcn_forward,
                   init_params, load_checkpoint, load_cube, loss_l2,
                   loss_mse, loss_sam, loss_total, metric_mpsnr,
                   metric_mssim, metric_sam, normalize,
                   pointwise_conv2d, protocol_split, reduce_sum, relu,
                   save_checkpoint, save_cube, transpose_conv2d,
                   upsample_block_forward, validate_on_patch)
from dsdcn.cli import main as cli_main
from dsdcn.model import DilatedFusionParams, UpsampleBlockParams
from dsdcn.training import split_validation_origin
from helpers import (channel_swapped, numerical_grad, rel_error, smooth_cube,
                     ssim_reference)

GRAD_TOL = 1e-4
FD_STEP = 1e-5


def passed(num, name):
    print(f"ACCEPTANCE {num} ({name}): PASS")


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_gradient_suite(rng):
    started = time.monotonic()

    def check(label, forward, *arrays):
        """FD-check d(sum(forward))/d(array) for every named input array."""
        wrapped = {name: Tensor4(a, requires_grad=True)
                   for name, a in arrays}
        tape = Tape()
        backward(tape, reduce_sum(forward(wrapped, tape), tape))

        def run():
            fresh = {name: Tensor4(a) for name, a in arrays}
            return forward(fresh, None).data.sum()

        for name, a in arrays:
            numeric = numerical_grad(run, a, FD_STEP)
            err = rel_error(wrapped[name].grad, numeric)
            assert err < GRAD_TOL, f"{label}/{name}: rel err {err}"

    def simple_case(label, op, x_shape, kernel=None, **kwargs):
        x = rng.normal(size=x_shape)

        def forward(tensors, tape):
            if kernel is None:
                return op(tensors["x"], tape=tape, **kwargs)
            return op(tensors["x"], kernel, tape=tape, **kwargs)

        check(label, forward, ("x", x))
        if kernel is not None:
            kernel.zero_grad()
            tape = Tape()
            xt = Tensor4(x)
            backward(tape, reduce_sum(op(xt, kernel, tape=tape, **kwargs),
                                      tape))

            def run_k():
                return op(Tensor4(x), kernel, **kwargs).data.sum()

            for grad, value in ((kernel.wgrad, kernel.weight),
                                (kernel.bgrad, kernel.bias)):
                err = rel_error(grad, numerical_grad(run_k, value, FD_STEP))
                assert err < GRAD_TOL, f"{label}: kernel rel err {err}"

    for d in (1, 2, 3):
        simple_case(f"conv2d-d{d}", conv2d, (1, 5, 4, 3),
                    ConvKernel(rng.normal(size=(3, 3, 3, 2)),
                               bias=rng.normal(size=2), dilation=d))
    simple_case("depthwise", depthwise_conv2d, (1, 4, 5, 3),
                ConvKernel(rng.normal(size=(3, 3, 3, 1)),
                           bias=rng.normal(size=3), depthwise=True))
    simple_case("pointwise", pointwise_conv2d, (1, 4, 4, 4),
                ConvKernel(rng.normal(size=(1, 1, 4, 2)),
                           bias=rng.normal(size=2)))
    simple_case("transpose", transpose_conv2d, (1, 4, 4, 2),
                ConvKernel(rng.normal(size=(4, 4, 2, 3)),
                           bias=rng.normal(size=3), stride=2))
    simple_case("relu", relu, (1, 5, 5, 3))

    def concat_add_forward(tensors, tape):
        cat = concat_channels(tensors["a"], tensors["b"], tape=tape)
        return add(cat, cat, tape=tape)

    check("concat+add", concat_add_forward,
          ("a", rng.normal(size=(1, 4, 4, 2))),
          ("b", rng.normal(size=(1, 4, 4, 3))))

    ds = DsBlockParams(
        depthwise=ConvKernel(rng.normal(size=(3, 3, 3, 1)),
                             bias=rng.normal(size=3), depthwise=True),
        pointwise=ConvKernel(rng.normal(size=(1, 1, 3, 4)),
                             bias=rng.normal(size=4)),
        residual=ConvKernel(rng.normal(size=(1, 1, 3, 4)),
                            bias=rng.normal(size=4)))
    check("ds-block", lambda t, tape: ds_block_forward(t["x"], ds, tape),
          ("x", rng.normal(size=(1, 4, 4, 3))))

    fusion = DilatedFusionParams(
        branches=tuple(ConvKernel(rng.normal(size=(3, 3, 2, 3)),
                                  bias=rng.normal(size=3), dilation=r)
                       for r in (1, 2, 3)),
        fuse=ConvKernel(rng.normal(size=(1, 1, 9, 2)),
                        bias=rng.normal(size=2)))
    check("fusion-block",
          lambda t, tape: dilated_fusion_forward(t["x"], fusion, tape),
          ("x", rng.normal(size=(1, 4, 4, 2))))

    up = UpsampleBlockParams(
        expand=ConvKernel(rng.normal(size=(4, 4, 2, 3)),
                          bias=rng.normal(size=3), stride=2),
        skip=ConvKernel(rng.normal(size=(1, 1, 2, 3)),
                        bias=rng.normal(size=3)))
    check("upsample-block",
          lambda t, tape: upsample_block_forward(t["x"], up, tape),
          ("x", rng.normal(size=(1, 4, 4, 2))))

    t_data = rng.normal(size=(1, 4, 4, 3))
    p_data = rng.normal(size=(1, 4, 4, 3))
    t = Tensor4(t_data, requires_grad=True)
    p = Tensor4(p_data, requires_grad=True)
    tape = Tape()
    backward(tape, loss_total(t, p, LossWeights(), tape))

    def run_loss():
        return loss_total(Tensor4(t_data), Tensor4(p_data),
                          LossWeights()).value

    assert rel_error(p.grad, numerical_grad(run_loss, p_data)) < GRAD_TOL
    assert rel_error(t.grad, numerical_grad(run_loss, t_data)) < GRAD_TOL

    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    passed(1, "gradient suite")


# -- 2 ----------------------------------------------------------------------

def test_criterion_2_adjoint_identity(rng):
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 3))
        h = int(rng.integers(4, 9))
        w = int(rng.integers(4, 9))
        ci = int(rng.integers(1, 5))
        co = int(rng.integers(1, 5))
        x = rng.normal(size=(n, h, w, ci))
        y = rng.normal(size=(n, h, w, co))
        weight = rng.normal(size=(3, 3, ci, co))
        lhs = np.sum(conv2d(Tensor4(x), ConvKernel(weight)).data * y)
        up = transpose_conv2d(Tensor4(y),
                              ConvKernel(channel_swapped(weight)), stride=1)
        rhs = np.sum(x * up.data)
        worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-10, f"worst adjoint defect {worst}"
    passed(2, "adjoint identity")


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_parameter_budget(tmp_path, capsys):
    cfg = tmp_path / "reference.json"
    cfg.write_text(json.dumps({"model.scale": 4, "model.group_size": 32}))
    assert cli_main(["params", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    total = int(out.strip().splitlines()[-1].split(":")[1].replace(",", ""))
    assert 900_000 <= total <= 1_000_000

    block = DsBlockParams(
        depthwise=ConvKernel(np.zeros((3, 3, 4, 1)), depthwise=True),
        pointwise=ConvKernel(np.zeros((1, 1, 4, 8))),
        residual=ConvKernel(np.zeros((1, 1, 4, 8))))
    hand_count = (3 * 3 * 4 + 4) + (4 * 8 + 8) + (4 * 8 + 8)
    assert hand_count == 120
    measured = sum(k.weight.size + k.bias.size
                   for k in (block.depthwise, block.pointwise,
                             block.residual))
    assert measured == 120
    passed(3, "parameter budget")


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_shape_contract(rng):
    for scale in (2, 4, 8):
        cfg = DsdcnConfig(group_size=8, base_channels=4, scale=scale)
        params = init_params(cfg, 0)
        h = int(rng.integers(4, 7))
        w = int(rng.integers(4, 7))
        x = Tensor4(rng.normal(size=(1, h, w, 8)))
        out = dsdcn_forward(x, params)
        assert out.shape == (1, scale * h, scale * w, 8)
    eight = init_params(DsdcnConfig(group_size=8, base_channels=4, scale=8),
                        0)
    assert len(eight.ups) == 3
    two = init_params(DsdcnConfig(group_size=8, base_channels=4, scale=2), 0)
    assert len(two.ups) == 1
    passed(4, "shape contract")


# -- 5 ----------------------------------------------------------------------

def test_criterion_5_band_group_laws(rng):
    for b in range(32, 257):
        spec = band_group_partition(b, 32, 8)
        covered = np.zeros(b, dtype=bool)
        for s in spec.starts:
            covered[s:s + 32] = True
        assert covered.all(), f"gap at B={b}"

    assert list(band_group_partition(102, 32, 8).starts) == [0, 24, 48, 70]

    for b in (32, 57, 102, 161):
        cube = HsiCube(rng.normal(size=(4, 5, b)))
        spec = band_group_partition(b, 32, 8)
        merged = band_group_merge(band_group_extract(cube, spec), spec, b)
        np.testing.assert_array_equal(merged.data, cube.data)
    passed(5, "band-group laws")


# -- 6 ----------------------------------------------------------------------

def test_criterion_6_metric_oracles(rng):
    ref = rng.uniform(0.2, 0.8, size=(16, 16, 4))
    est = ref + math.sqrt(1e-3)
    assert abs(metric_mpsnr(ref, est, peak=1.0) - 30.0) < 1e-9

    assert abs(metric_mssim(ref, ref.copy()) - 1.0) < 1e-12

    assert abs(metric_sam(ref, 2.0 * ref) - 0.0) < 1e-4

    ortho_ref = np.zeros((3, 3, 2))
    ortho_est = np.zeros((3, 3, 2))
    ortho_ref[..., 0] = 1.0
    ortho_est[..., 1] = 1.0
    assert abs(metric_sam(ortho_ref, ortho_est) - 90.0) < 1e-6

    noisy = np.clip(ref + rng.normal(scale=0.08, size=ref.shape), 0, 1)
    oracle = np.mean([ssim_reference(ref[..., k], noisy[..., k])
                      for k in range(ref.shape[2])])
    assert abs(metric_mssim(ref, noisy) - oracle) < 1e-10
    passed(6, "metric oracles")


# -- 7 ----------------------------------------------------------------------

def test_criterion_7_loss_composition(rng):
    for trial in range(10):
        shape = (1, int(rng.integers(2, 5)), int(rng.integers(2, 5)),
                 int(rng.integers(2, 6)))
        t = Tensor4(rng.normal(size=shape))
        p = Tensor4(rng.normal(size=shape))
        m = loss_mse(t, p).value
        s = loss_sam(t, p).value
        l2 = loss_l2(t, p).value
        assert abs(loss_total(t, p, LossWeights()).value
                   - (m + 0.5 * s + 0.03 * l2)) < 1e-12
        assert l2 == shape[3] * m
    passed(7, "loss composition")


# -- 8 ----------------------------------------------------------------------

def test_criterion_8_degradation(rng):
    quad = HsiCube(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
    assert area_downsample(quad, 2).data[0, 0, 0] == 2.5

    cube = HsiCube(rng.normal(size=(24, 16, 6)))
    once = area_downsample(cube, 4)
    twice = area_downsample(area_downsample(cube, 2), 2)
    np.testing.assert_array_equal(once.data, twice.data)

    big = HsiCube(rng.normal(size=(16, 16, 3)))
    for factor in (2, 4, 8):
        down = area_downsample(big, factor)
        np.testing.assert_allclose(down.data.mean(axis=(0, 1)),
                                   big.data.mean(axis=(0, 1)), atol=1e-12)
    passed(8, "degradation")


# -- 9 ----------------------------------------------------------------------

def test_criterion_9_overfit_convergence():
    started = time.monotonic()
    cube = HsiCube(smooth_cube(32, 32, 16, seed=3, freq=(0.3, 0.8)))
    norm, _ = normalize(cube)
    train_set, _ = protocol_split(norm, "paviau-like", 16, 8)
    train_origins, _ = split_validation_origin(train_set.origins)

    cfg = DsdcnConfig(group_size=16, base_channels=20, scale=2)
    hr_patches = [np.ascontiguousarray(norm.data[r:r + 16, c:c + 16, :])
                  for r, c in train_origins]
    lr_patches = [area_downsample(HsiCube(hr), 2).data for hr in hr_patches]
    x = Tensor4(np.stack(lr_patches))
    y = Tensor4(np.stack(hr_patches))

    params = init_params(cfg, 0)
    state = AdamState(params)
    opt = TrainConfig(learning_rate=3e-3)
    losses = []
    best = -math.inf
    for step in range(1, 2001):
        tape = Tape()
        pred = dsdcn_forward(x, params, tape=tape)
        loss = loss_total(y, pred, LossWeights(), tape)
        params.zero_grad()
        backward(tape, loss)
        adam_step(params, state, opt)
        losses.append(loss.value)
        if step % 250 == 0:
            mpsnr = validate_on_patch(params, HsiCube(hr_patches[0])).mpsnr_db
            best = max(best, mpsnr)
            if mpsnr > 40.0:
                break

    elapsed = time.monotonic() - started
    assert best > 40.0, f"training-patch MPSNR peaked at {best:.2f} dB"
    smoothed_start = float(np.mean(losses[:50]))
    smoothed_end = float(np.mean(losses[-50:]))
    assert smoothed_end < 0.1 * smoothed_start
    assert elapsed < 600.0, f"overfit run took {elapsed:.0f}s"
    passed(9, "overfit convergence")


# -- 10 ---------------------------------------------------------------------

def test_criterion_10_end_to_end_smoke(tmp_path, capsys):
    scene = tmp_path / "scene.hsic"
    save_cube(HsiCube(smooth_cube(32, 32, 8, seed=5)), scene)

    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "model.group_size": 8, "model.base_channels": 6, "model.scale": 2,
        "train.max_epochs": 5, "train.patience": 10,
        "data.cube": str(scene), "data.dataset_kind": "paviau-like",
        "data.patch_size": 16, "data.patch_stride": 8,
        "out.checkpoint": str(tmp_path / "model.ckpt"),
        "out.report": str(tmp_path / "report.jsonl"),
    }))

    lr_cube = tmp_path / "lr.hsic"
    sr_cube = tmp_path / "sr.hsic"
    assert cli_main(["degrade", "--input", str(scene), "--scale", "2",
                     "--output", str(lr_cube)]) == 0
    assert cli_main(["train", "--config", str(config)]) == 0
    assert cli_main(["sr", "--checkpoint", str(tmp_path / "model.ckpt"),
                     "--input", str(lr_cube),
                     "--output", str(sr_cube)]) == 0
    assert load_cube(sr_cube).shape == (32, 32, 8)
    capsys.readouterr()
    assert cli_main(["evaluate", "--checkpoint",
                     str(tmp_path / "model.ckpt"), "--truth", str(scene),
                     "--scale", "2"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"mpsnr_db", "mssim", "sam_deg"}
    assert all(np.isfinite(v) for v in report.values())

    # the best checkpoint must reproduce its logged validation MPSNR
    lines = [json.loads(line) for line in
             (tmp_path / "report.jsonl").read_text().splitlines()]
    summary = lines[-1]
    params, _ = load_checkpoint(tmp_path / "model.ckpt")
    norm, _ = normalize(load_cube(scene))
    r, c = summary["val_origin"]
    patch = HsiCube(np.ascontiguousarray(norm.data[r:r + 16, c:c + 16, :]))
    rerun = validate_on_patch(params, patch)
    assert abs(rerun.mpsnr_db - summary["best_val_mpsnr"]) < 1e-9
    passed(10, "end-to-end smoke")


# -- 11 ---------------------------------------------------------------------

def test_criterion_11_checkpoint_round_trip(tmp_path, rng):
    cfg = DsdcnConfig(group_size=8, base_channels=6, scale=4,
                      precision="float64")
    params = init_params(cfg, 13)
    x = Tensor4(rng.normal(size=(1, 5, 5, 8)))
    before = dsdcn_forward(x, params).data.copy()
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, cfg, path)
    loaded, _ = load_checkpoint(path)
    after = dsdcn_forward(x, loaded).data
    np.testing.assert_array_equal(before, after)
    passed(11, "checkpoint round-trip")
