"""Optimization loop: Adam over band-group patches, early stopping on
validation MPSNR, checkpointing, and full-cube evaluation.

Parameters and optimizer state are single-writer, mutated only between
steps; evaluation reads parameters without mutating them and may run
concurrently over disjoint band groups."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import (HsiCube, area_downsample, band_group_extract,
                   band_group_merge, band_group_partition, load_cube,
                   normalize, protocol_split)
from .losses import LossWeights, loss_total
from .metrics import MetricReport, metric_report
from .model import (DsdcnConfig, DsdcnParams, dsdcn_forward, init_params,
                    load_checkpoint, save_checkpoint)
from .tensor import Tape, Tensor4, backward


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being finite; training never limps on."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule hyperparameters."""

    batch_size: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(
                f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


class AdamState:
    """First/second moment buffers per named parameter plus a step count."""

    def __init__(self, params: DsdcnParams):
        self.moments = {name: (np.zeros_like(value), np.zeros_like(value))
                        for name, value, _ in params.named_arrays()}
        self.t = 0


def adam_step(params: DsdcnParams, state: AdamState,
              cfg: TrainConfig) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, value, grad in params.named_arrays():
        if grad is None:
            raise RuntimeError(f"parameter {name!r} has no gradient")
        m, v = state.moments[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad * grad
        value -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


# ---------------------------------------------------------------------------
# inference over full cubes
# ---------------------------------------------------------------------------

def super_resolve_cube(params: DsdcnParams, lr: HsiCube,
                       overlap: int | None = None) -> HsiCube:
    """Group the bands, super-resolve each group, and merge (overlapping
    band predictions average)."""
    cfg = params.config
    spec = band_group_partition(lr.b, cfg.group_size, overlap)
    outputs = []
    for group in band_group_extract(lr, spec):
        x = Tensor4(group.data, dtype=cfg.dtype)
        outputs.append(dsdcn_forward(x, params))
    return band_group_merge(outputs, spec, lr.b)


def validate_on_patch(params: DsdcnParams, hr_patch: HsiCube) -> MetricReport:
    """Degrade a ground-truth patch, super-resolve it, and score it."""
    lr = area_downsample(hr_patch, params.config.scale)
    sr = super_resolve_cube(params, lr)
    return metric_report(hr_patch.data, sr.data.astype(np.float64), peak=1.0)


def evaluate(checkpoint_path, cube_path, scale: int) -> MetricReport:
    """Score a checkpoint against a ground-truth cube at the given scale."""
    params, config = load_checkpoint(checkpoint_path)
    if scale != config.scale:
        raise ValueError(
            f"checkpoint was trained for scale {config.scale}, "
            f"requested {scale}")
    cube = load_cube(cube_path)
    if cube.h % scale or cube.w % scale:
        raise ValueError(
            f"cube {cube.h}x{cube.w} not divisible by scale {scale}")
    norm, _ = normalize(cube)
    return validate_on_patch(params, norm)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mpsnr: float
    val_mssim: float
    val_sam_deg: float

    def to_json(self) -> str:
        return json.dumps({"epoch": self.epoch,
                           "train_loss": self.train_loss,
                           "val_mpsnr": self.val_mpsnr,
                           "val_mssim": self.val_mssim,
                           "val_sam_deg": self.val_sam_deg})


@dataclass
class TrainReport:
    """Per-epoch history plus the early-stopping outcome."""

    epochs: list[EpochRecord]
    best_epoch: int
    best_val_mpsnr: float
    stopped_epoch: int
    checkpoint_path: str
    val_origin: tuple[int, int]
    step_losses: list[float] = field(default_factory=list, repr=False)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.epochs:
                f.write(rec.to_json() + "\n")
            f.write(json.dumps({"best_epoch": self.best_epoch,
                                "best_val_mpsnr": self.best_val_mpsnr,
                                "stopped_epoch": self.stopped_epoch,
                                "checkpoint": str(self.checkpoint_path),
                                "val_origin": list(self.val_origin)}) + "\n")


def split_validation_origin(origins: list[tuple[int, int]]
                            ) -> tuple[list[tuple[int, int]], tuple[int, int]]:
    """Hold out the last training origin for validation (the test patch
    stays untouched); a single-patch set serves both roles."""
    if len(origins) >= 2:
        return origins[:-1], origins[-1]
    return list(origins), origins[0]


def train(config: DsdcnConfig, cube_path, dataset_kind: str,
          cfg: TrainConfig, checkpoint_path, patch_size: int = 144,
          patch_stride: int | None = None, report_path=None) -> TrainReport:
    """Fit the network on one cube under the patch protocol.

    Each step samples `batch_size` (patch, band-group) pairs, degrades the
    targets on the fly, and applies one Adam update on the composite loss.
    Stops when validation MPSNR fails to improve for `patience` epochs or
    `max_epochs` is reached; the best checkpoint is kept on disk.
    """
    if patch_size % config.scale:
        raise ValueError(
            f"patch size {patch_size} not divisible by scale {config.scale}")
    cube = load_cube(cube_path)
    norm, _ = normalize(cube)
    train_set, _test_origin = protocol_split(norm, dataset_kind, patch_size,
                                             patch_stride)
    train_origins, val_origin = split_validation_origin(train_set.origins)
    if not train_origins:
        raise ValueError("empty training set")
    group_spec = band_group_partition(norm.b, config.group_size)
    pairs = [(origin, start) for origin in train_origins
             for start in group_spec.starts]

    params = init_params(config, cfg.seed)
    state = AdamState(params)
    rng = np.random.default_rng(cfg.seed)
    gs = group_spec.group_size
    p = patch_size

    def sample_arrays(origin, start):
        r, c = origin
        hr = np.ascontiguousarray(norm.data[r:r + p, c:c + p,
                                            start:start + gs])
        lr = area_downsample(HsiCube(hr), config.scale).data
        return lr, hr

    val_hr = HsiCube(np.ascontiguousarray(
        norm.data[val_origin[0]:val_origin[0] + p,
                  val_origin[1]:val_origin[1] + p, :]))

    records: list[EpochRecord] = []
    step_losses: list[float] = []
    best_mpsnr = -math.inf
    best_epoch = 0
    epochs_since_best = 0
    step = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(pairs))
        epoch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [pairs[i] for i in order[lo:lo + cfg.batch_size]]
            lrs, hrs = zip(*(sample_arrays(o, s) for o, s in batch))
            x = Tensor4(np.stack(lrs), dtype=config.dtype)
            y = Tensor4(np.stack(hrs), dtype=config.dtype)
            tape = Tape()
            pred = dsdcn_forward(x, params, tape=tape)
            loss = loss_total(y, pred, cfg.weights, tape)
            step += 1
            if not math.isfinite(loss.value):
                raise TrainingDivergedError(
                    f"non-finite loss {loss.value} at step {step} "
                    f"(epoch {epoch})")
            params.zero_grad()
            backward(tape, loss)
            adam_step(params, state, cfg)
            epoch_losses.append(loss.value)
            step_losses.append(loss.value)

        report = validate_on_patch(params, val_hr)
        records.append(EpochRecord(epoch=epoch,
                                   train_loss=float(np.mean(epoch_losses)),
                                   val_mpsnr=report.mpsnr_db,
                                   val_mssim=report.mssim,
                                   val_sam_deg=report.sam_deg))
        if report.mpsnr_db > best_mpsnr:
            best_mpsnr = report.mpsnr_db
            best_epoch = epoch
            epochs_since_best = 0
            save_checkpoint(params, config, checkpoint_path)
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    result = TrainReport(epochs=records, best_epoch=best_epoch,
                         best_val_mpsnr=best_mpsnr, stopped_epoch=epoch,
                         checkpoint_path=str(checkpoint_path),
                         val_origin=val_origin, step_losses=step_losses)
    if report_path is not None:
        result.write_jsonl(report_path)
    return result
