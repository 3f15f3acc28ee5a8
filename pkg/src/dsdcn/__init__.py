"""Lightweight hyperspectral image super-resolution.

A self-contained engine built on depthwise separable blocks, dilated
convolution fusion, and transpose-convolution upsampling, with its own
NHWC tensor core, reverse-mode gradients, band-grouping data pipeline,
composite loss, quality metrics, Adam trainer, and CLI.
"""

from .data import (BandGroupSpec, HsiCube, area_downsample,
                   band_group_extract, band_group_merge,
                   band_group_partition, denormalize, extract_patches,
                   load_cube, normalize, protocol_split, save_cube)
from .kernels import active_backend, available_backends
from .losses import LossWeights, loss_l2, loss_mse, loss_sam, loss_total
from .metrics import (MetricReport, metric_mpsnr, metric_mssim,
                      metric_report, metric_sam)
from .model import (DilatedFusionParams, DsBlockParams, DsdcnConfig,
                    DsdcnParams, UpsampleBlockParams, dilated_fusion_forward,
                    ds_block_forward, dsdcn_forward, init_params,
                    load_checkpoint, param_breakdown, param_count,
                    save_checkpoint, upsample_block_forward)
from .tensor import (ConvKernel, Scalar, ShapeError, Tape, Tensor4, add,
                     backward, concat_channels, conv2d, depthwise_conv2d,
                     pointwise_conv2d, reduce_sum, relu, transpose_conv2d,
                     upsample_nearest)
from .training import (AdamState, TrainConfig, TrainReport,
                       TrainingDivergedError, adam_step, evaluate,
                       super_resolve_cube, train, validate_on_patch)

__version__ = "0.1.0"

__all__ = [
    "BandGroupSpec", "HsiCube", "area_downsample", "band_group_extract",
    "band_group_merge", "band_group_partition", "denormalize",
    "extract_patches", "load_cube", "normalize", "protocol_split",
    "save_cube", "active_backend", "available_backends", "LossWeights",
    "loss_l2", "loss_mse", "loss_sam", "loss_total", "MetricReport",
    "metric_mpsnr", "metric_mssim", "metric_report", "metric_sam",
    "DilatedFusionParams", "DsBlockParams", "DsdcnConfig", "DsdcnParams",
    "UpsampleBlockParams", "dilated_fusion_forward", "ds_block_forward",
    "dsdcn_forward", "init_params", "load_checkpoint", "param_breakdown",
    "param_count", "save_checkpoint", "upsample_block_forward",
    "ConvKernel", "Scalar", "ShapeError", "Tape", "Tensor4", "add",
    "backward", "concat_channels", "conv2d", "depthwise_conv2d",
    "pointwise_conv2d", "reduce_sum", "relu", "transpose_conv2d",
    "upsample_nearest", "AdamState", "TrainConfig", "TrainReport",
    "TrainingDivergedError", "adam_step", "evaluate", "super_resolve_cube",
    "train", "validate_on_patch",
]
