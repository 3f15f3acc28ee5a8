"""Network assembly: separable stem, three depthwise separable blocks,
dilated multi-scale fusion, a chain of 2x upsampling blocks, and a linear
head projecting back to the band-group width.

Also provides parameter initialization, counting, and the binary
checkpoint format:

    magic "DSDCN\\0" | version u16 | config JSON (u32 length prefix)
    | tensor count u32 | records of (name u16-prefixed utf8, dtype u8
    (32|64), rank u8, dims u32 each, raw little-endian data)
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor import ConvKernel, ShapeError, Tape, Tensor4
from . import tensor as T

CHECKPOINT_MAGIC = b"DSDCN\x00"
CHECKPOINT_VERSION = 1

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_DTYPE_BITS = {np.dtype(np.float32): 32, np.dtype(np.float64): 64}
_BITS_DTYPE = {32: np.dtype("<f4"), 64: np.dtype("<f8")}


class CheckpointError(ValueError):
    """Base error for unloadable checkpoints."""


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


# ---------------------------------------------------------------------------
# configuration and parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DsdcnConfig:
    """Architecture hyperparameters.

    The default base width of 116 puts the 4x / 32-band reference model at
    954,916 learnable parameters (see `param_count`), inside the intended
    0.90M..1.00M budget.
    """

    group_size: int = 32
    base_channels: int = 116
    num_ds_blocks: int = 3
    dilation_rates: tuple[int, int, int] = (1, 2, 3)
    scale: int = 4
    precision: str = "float64"

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError(f"group_size must be >= 1, got {self.group_size}")
        if self.base_channels < 1:
            raise ValueError(
                f"base_channels must be >= 1, got {self.base_channels}")
        if self.num_ds_blocks != 3:
            raise ValueError(
                f"the architecture uses exactly 3 separable blocks, "
                f"got {self.num_ds_blocks}")
        rates = tuple(self.dilation_rates)
        if len(rates) != 3 or any(r < 1 for r in rates):
            raise ValueError(
                f"dilation_rates must be 3 positive ints, got {rates}")
        object.__setattr__(self, "dilation_rates", rates)
        if self.scale < 2 or self.scale & (self.scale - 1):
            raise ValueError(
                f"scale must be a power of 2 (>= 2), got {self.scale}")
        if self.precision not in _PRECISIONS:
            raise ValueError(
                f"precision must be one of {sorted(_PRECISIONS)}, "
                f"got {self.precision!r}")

    @property
    def num_upsample_blocks(self) -> int:
        return int(math.log2(self.scale))

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]

    def to_dict(self) -> dict:
        return {"group_size": self.group_size,
                "base_channels": self.base_channels,
                "num_ds_blocks": self.num_ds_blocks,
                "dilation_rates": list(self.dilation_rates),
                "scale": self.scale,
                "precision": self.precision}

    @classmethod
    def from_dict(cls, obj: dict) -> "DsdcnConfig":
        known = {"group_size", "base_channels", "num_ds_blocks",
                 "dilation_rates", "scale", "precision"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(obj)
        if "dilation_rates" in kwargs:
            kwargs["dilation_rates"] = tuple(kwargs["dilation_rates"])
        return cls(**kwargs)


@dataclass
class StemParams:
    """Separable stem: depthwise 3x3 over the input bands, then a
    pointwise lift to the working width."""

    depthwise: ConvKernel
    pointwise: ConvKernel


@dataclass
class DsBlockParams:
    """One depthwise separable block with a projected residual path."""

    depthwise: ConvKernel
    pointwise: ConvKernel
    residual: ConvKernel

    def __post_init__(self):
        if self.pointwise.c_out != self.residual.c_out:
            raise ValueError(
                f"pointwise ({self.pointwise.c_out}) and residual "
                f"({self.residual.c_out}) widths must match to sum")


@dataclass
class DilatedFusionParams:
    """Three parallel 3x3 branches at increasing dilation plus a 1x1 fuse."""

    branches: tuple[ConvKernel, ConvKernel, ConvKernel]
    fuse: ConvKernel

    def __post_init__(self):
        cis = {k.c_in for k in self.branches}
        cos = {k.c_out for k in self.branches}
        if len(cis) != 1 or len(cos) != 1:
            raise ValueError("fusion branches must share input/output widths")
        if self.fuse.c_in != 3 * self.branches[0].c_out:
            raise ValueError(
                f"fuse kernel expects {3 * self.branches[0].c_out} channels, "
                f"got {self.fuse.c_in}")


@dataclass
class UpsampleBlockParams:
    """Transpose-conv 2x expansion plus a projected nearest-neighbor skip."""

    expand: ConvKernel
    skip: ConvKernel

    def __post_init__(self):
        if self.expand.c_out != self.skip.c_out:
            raise ValueError(
                f"expand ({self.expand.c_out}) and skip ({self.skip.c_out}) "
                f"widths must match to sum")


@dataclass
class DsdcnParams:
    """All learnable kernels of the network, in pipeline order."""

    stem: StemParams
    blocks: list[DsBlockParams]
    fusion: DilatedFusionParams
    ups: list[UpsampleBlockParams]
    head: ConvKernel
    config: DsdcnConfig = field(repr=False)

    def __post_init__(self):
        if self.head.c_out != self.config.group_size:
            raise ValueError(
                f"head emits {self.head.c_out} bands, config groups are "
                f"{self.config.group_size} wide")
        if len(self.ups) != self.config.num_upsample_blocks:
            raise ValueError(
                f"{len(self.ups)} upsample blocks for scale "
                f"{self.config.scale} (need {self.config.num_upsample_blocks})")

    def named_kernels(self) -> list[tuple[str, ConvKernel]]:
        out = [("stem.depthwise", self.stem.depthwise),
               ("stem.pointwise", self.stem.pointwise)]
        for i, blk in enumerate(self.blocks, start=1):
            out += [(f"block{i}.depthwise", blk.depthwise),
                    (f"block{i}.pointwise", blk.pointwise),
                    (f"block{i}.residual", blk.residual)]
        for i, br in enumerate(self.fusion.branches, start=1):
            out.append((f"fusion.dilated{i}", br))
        out.append(("fusion.fuse", self.fusion.fuse))
        for i, up in enumerate(self.ups, start=1):
            out += [(f"up{i}.expand", up.expand),
                    (f"up{i}.skip", up.skip)]
        out.append(("head", self.head))
        return out

    def named_arrays(self):
        """(name, value, grad) triples over every trainable array."""
        for name, k in self.named_kernels():
            yield f"{name}.weight", k.weight, k.wgrad
            yield f"{name}.bias", k.bias, k.bgrad

    def zero_grad(self) -> None:
        for _, k in self.named_kernels():
            k.zero_grad()


# ---------------------------------------------------------------------------
# block forwards
# ---------------------------------------------------------------------------

def ds_block_forward(x: Tensor4, p: DsBlockParams,
                     tape: Tape | None = None) -> Tensor4:
    """pointwise(depthwise(x)) + residual-projection(x)."""
    main = T.pointwise_conv2d(T.depthwise_conv2d(x, p.depthwise, tape),
                              p.pointwise, tape)
    return T.add(main, T.pointwise_conv2d(x, p.residual, tape), tape)


def dilated_fusion_forward(x: Tensor4, p: DilatedFusionParams,
                           tape: Tape | None = None) -> Tensor4:
    """ReLU(fuse(concat of the three ReLU dilated branches))."""
    feats = [T.relu(T.conv2d(x, k, tape=tape), tape) for k in p.branches]
    cat = T.concat_channels(*feats, tape=tape)
    return T.relu(T.pointwise_conv2d(cat, p.fuse, tape), tape)


def upsample_block_forward(x: Tensor4, p: UpsampleBlockParams,
                           tape: Tape | None = None) -> Tensor4:
    """ReLU(transpose-conv(x)) + skip(nearest-upsample(x)); doubles h, w."""
    expanded = T.relu(T.transpose_conv2d(x, p.expand, tape=tape), tape)
    skip = T.pointwise_conv2d(T.upsample_nearest(x, 2, tape), p.skip, tape)
    return T.add(expanded, skip, tape)


def dsdcn_forward(x: Tensor4, params: DsdcnParams,
                  config: DsdcnConfig | None = None,
                  tape: Tape | None = None) -> Tensor4:
    """Full pipeline on a batch of band groups; output is
    (n, scale*h, scale*w, group_size) with a linear head."""
    cfg = params.config if config is None else config
    if x.c != cfg.group_size:
        raise ShapeError(
            f"model expects {cfg.group_size}-band groups, input has {x.c}")
    h = T.relu(T.pointwise_conv2d(
        T.depthwise_conv2d(x, params.stem.depthwise, tape),
        params.stem.pointwise, tape), tape)
    for blk in params.blocks:
        h = ds_block_forward(h, blk, tape)
    h = dilated_fusion_forward(h, params.fusion, tape)
    for up in params.ups:
        h = upsample_block_forward(h, up, tape)
    return T.pointwise_conv2d(h, params.head, tape)


# ---------------------------------------------------------------------------
# initialization and counting
# ---------------------------------------------------------------------------

def _fan_in(shape: tuple[int, ...], depthwise: bool) -> int:
    kh, kw, ci, _ = shape
    return kh * kw if depthwise else kh * kw * ci


def _init_kernel(rng: np.random.Generator, shape, dtype, *,
                 depthwise=False, dilation=1, stride=1) -> ConvKernel:
    # bound sqrt(1/fan_in): the separable blocks are linear (no activation
    # between them), so a gain-2 scheme like sqrt(6/fan_in) compounds to
    # huge activations and collapses the downstream ReLUs at the first
    # optimizer steps
    bound = math.sqrt(1.0 / _fan_in(shape, depthwise))
    w = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return ConvKernel(w, dilation=dilation, stride=stride,
                      depthwise=depthwise)


def init_params(config: DsdcnConfig, seed: int = 0) -> DsdcnParams:
    """Fan-in-scaled uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    g, c = config.group_size, config.base_channels
    dt = config.dtype
    stem = StemParams(
        depthwise=_init_kernel(rng, (3, 3, g, 1), dt, depthwise=True),
        pointwise=_init_kernel(rng, (1, 1, g, c), dt))
    blocks = [DsBlockParams(
        depthwise=_init_kernel(rng, (3, 3, c, 1), dt, depthwise=True),
        pointwise=_init_kernel(rng, (1, 1, c, c), dt),
        residual=_init_kernel(rng, (1, 1, c, c), dt))
        for _ in range(config.num_ds_blocks)]
    fusion = DilatedFusionParams(
        branches=tuple(_init_kernel(rng, (3, 3, c, c), dt, dilation=r)
                       for r in config.dilation_rates),
        fuse=_init_kernel(rng, (1, 1, 3 * c, c), dt))
    ups = [UpsampleBlockParams(
        expand=_init_kernel(rng, (4, 4, c, c), dt, stride=2),
        skip=_init_kernel(rng, (1, 1, c, c), dt))
        for _ in range(config.num_upsample_blocks)]
    head = _init_kernel(rng, (1, 1, c, g), dt)
    return DsdcnParams(stem=stem, blocks=blocks, fusion=fusion, ups=ups,
                       head=head, config=config)


def param_count(params: DsdcnParams) -> int:
    """Total scalar learnables: every kernel element plus every bias."""
    return sum(k.weight.size + k.bias.size
               for _, k in params.named_kernels())


def param_breakdown(params: DsdcnParams) -> dict[str, int]:
    """Per-stage counts; values sum exactly to `param_count`."""
    out: dict[str, int] = {}
    for name, k in params.named_kernels():
        stage = name.split(".")[0]
        out[stage] = out.get(stage, 0) + k.weight.size + k.bias.size
    return out


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

def save_checkpoint(params: DsdcnParams, config: DsdcnConfig, path) -> None:
    cfg_blob = json.dumps(config.to_dict()).encode("utf-8")
    records = list(params.named_arrays())
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<H", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(cfg_blob)))
        f.write(cfg_blob)
        f.write(struct.pack("<I", len(records)))
        for name, value, _ in records:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            bits = _DTYPE_BITS[value.dtype]
            f.write(struct.pack("<BB", bits, value.ndim))
            f.write(struct.pack(f"<{value.ndim}I", *value.shape))
            f.write(np.ascontiguousarray(
                value, dtype=_BITS_DTYPE[bits]).tobytes())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptCheckpointError(
                f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> tuple[DsdcnParams, DsdcnConfig]:
    """Bit-exact inverse of `save_checkpoint`, with strict validation."""
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    if r.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad checkpoint magic")
    (version,) = r.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint version {version}, expected "
            f"{CHECKPOINT_VERSION}")
    (cfg_len,) = r.unpack("<I")
    try:
        config = DsdcnConfig.from_dict(json.loads(r.take(cfg_len)))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, CorruptCheckpointError):
            raise
        raise CorruptCheckpointError(
            f"{path}: invalid config block ({exc})") from exc
    params = init_params(config, seed=0)
    expected = {name: value for name, value, _ in params.named_arrays()}
    (n_records,) = r.unpack("<I")
    if n_records != len(expected):
        raise CheckpointShapeError(
            f"{path}: {n_records} tensor records, expected {len(expected)}")
    seen = set()
    for _ in range(n_records):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        bits, rank = r.unpack("<BB")
        if bits not in _BITS_DTYPE:
            raise CorruptCheckpointError(
                f"{path}: unknown dtype tag {bits} for {name!r}")
        dims = r.unpack(f"<{rank}I")
        if name not in expected:
            raise CheckpointShapeError(
                f"{path}: unexpected tensor {name!r}")
        target = expected[name]
        if tuple(dims) != target.shape:
            raise CheckpointShapeError(
                f"{path}: {name!r} has dims {dims}, expected {target.shape}")
        if _BITS_DTYPE[bits] != np.dtype(config.dtype).newbyteorder("<"):
            raise CheckpointShapeError(
                f"{path}: {name!r} stored as {bits}-bit, config says "
                f"{config.precision}")
        raw = r.take(int(np.prod(dims, dtype=np.int64)) *
                     _BITS_DTYPE[bits].itemsize)
        target[...] = np.frombuffer(raw, dtype=_BITS_DTYPE[bits]) \
            .reshape(dims)
        seen.add(name)
    if seen != set(expected):
        raise CheckpointShapeError(
            f"{path}: missing tensors {sorted(set(expected) - seen)}")
    return params, config
