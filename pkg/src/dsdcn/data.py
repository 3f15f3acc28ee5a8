"""Hyperspectral cube I/O, normalization, band grouping, and the
degradation / patch protocol.

Cubes are stored row-major (h, w, bands), i.e. band-interleaved by pixel,
both in memory and in the on-disk HSIC format:

    magic "HSIC" | version u16 | h u32 | w u32 | b u32 | dtype u8 (32|64)
    | raw little-endian data

All transforms here are pure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor4

HSIC_MAGIC = b"HSIC"
HSIC_VERSION = 1
# Guards against absurd headers from corrupt files (per-axis).
MAX_DIM = 1 << 20

_DTYPE_TAGS = {32: np.dtype("<f4"), 64: np.dtype("<f8")}


class CubeFormatError(ValueError):
    """Base error for unreadable cube files."""


class BadMagicError(CubeFormatError):
    pass


class TruncatedFileError(CubeFormatError):
    pass


class DimOverflowError(CubeFormatError):
    pass


@dataclass
class HsiCube:
    """A single hyperspectral image, (h, w, bands) reflectance values."""

    data: np.ndarray
    band_wavelengths: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ShapeError(f"cube needs (h, w, bands), got {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"cube dims must all be >= 1, got {arr.shape}")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def b(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def save_cube(cube: HsiCube, path) -> None:
    bits = 32 if cube.data.dtype == np.float32 else 64
    with open(path, "wb") as f:
        f.write(HSIC_MAGIC)
        f.write(struct.pack("<HIIIB", HSIC_VERSION, cube.h, cube.w, cube.b,
                            bits))
        f.write(np.ascontiguousarray(cube.data,
                                     dtype=_DTYPE_TAGS[bits]).tobytes())


def load_cube(path) -> HsiCube:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(HSIC_MAGIC):
        raise TruncatedFileError(f"{path}: file shorter than the magic")
    if raw[:4] != HSIC_MAGIC:
        raise BadMagicError(f"{path}: not an HSIC file")
    header_len = 4 + struct.calcsize("<HIIIB")
    if len(raw) < header_len:
        raise TruncatedFileError(f"{path}: truncated header")
    version, h, w, b, bits = struct.unpack("<HIIIB", raw[4:header_len])
    if version != HSIC_VERSION:
        raise CubeFormatError(
            f"{path}: unsupported HSIC version {version}")
    if bits not in _DTYPE_TAGS:
        raise CubeFormatError(f"{path}: unknown dtype tag {bits}")
    if min(h, w, b) < 1 or max(h, w, b) > MAX_DIM:
        raise DimOverflowError(f"{path}: implausible dims {h}x{w}x{b}")
    dtype = _DTYPE_TAGS[bits]
    expected = h * w * b * dtype.itemsize
    payload = raw[header_len:]
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} data bytes, found {len(payload)}")
    data = np.frombuffer(payload[:expected], dtype=dtype).reshape(h, w, b)
    return HsiCube(data.astype(data.dtype.newbyteorder("=")))


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationRecord:
    """Per-band min/max enabling exact inversion of `normalize`."""

    band_min: np.ndarray
    band_max: np.ndarray


def normalize(cube: HsiCube) -> tuple[HsiCube, NormalizationRecord]:
    """Min-max scale each band to [0, 1]; constant bands map to 0."""
    lo = cube.data.min(axis=(0, 1))
    hi = cube.data.max(axis=(0, 1))
    span = hi - lo
    safe = np.where(span == 0, 1.0, span)
    scaled = (cube.data - lo) / safe
    scaled[:, :, span == 0] = 0.0
    return (HsiCube(scaled, cube.band_wavelengths),
            NormalizationRecord(band_min=lo.copy(), band_max=hi.copy()))


def denormalize(cube: HsiCube, record: NormalizationRecord) -> HsiCube:
    span = record.band_max - record.band_min
    return HsiCube(cube.data * span + record.band_min, cube.band_wavelengths)


# ---------------------------------------------------------------------------
# band grouping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandGroupSpec:
    """Overlapping fixed-width partition of the spectral axis."""

    group_size: int
    overlap: int
    starts: tuple[int, ...]

    @property
    def num_groups(self) -> int:
        return len(self.starts)


def band_group_partition(b: int, group_size: int = 32,
                         overlap: int | None = None) -> BandGroupSpec:
    """Starts advance by (group_size - overlap); the last group is anchored
    at b - group_size when the stride pattern would overrun."""
    if overlap is None:
        overlap = group_size // 4
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    if group_size > b:
        raise ValueError(
            f"group_size {group_size} exceeds band count {b}")
    if not 0 <= overlap < group_size:
        raise ValueError(
            f"overlap must be in [0, group_size), got {overlap}")
    stride = group_size - overlap
    starts = list(range(0, b - group_size + 1, stride))
    if starts[-1] + group_size < b:
        starts.append(b - group_size)
    return BandGroupSpec(group_size=group_size, overlap=overlap,
                         starts=tuple(starts))


def band_group_extract(cube: HsiCube, spec: BandGroupSpec) -> list[Tensor4]:
    """Slice the cube into (1, h, w, group_size) tensors, one per group."""
    if not spec.starts or spec.starts[-1] + spec.group_size > cube.b:
        raise ShapeError(
            f"group spec (last start {spec.starts[-1] if spec.starts else '-'}, "
            f"size {spec.group_size}) does not fit {cube.b} bands")
    return [Tensor4(cube.data[None, :, :, s:s + spec.group_size])
            for s in spec.starts]


def band_group_merge(groups: list[Tensor4], spec: BandGroupSpec,
                     b: int) -> HsiCube:
    """Recombine group predictions; overlapped bands average.

    The mean of band k is computed as first_k + sum(v_i - first_k) / n_k,
    which is exact (not just close) whenever all covering groups agree,
    so merge(extract(cube)) reproduces the cube bit-for-bit.
    """
    if len(groups) != len(spec.starts):
        raise ShapeError(
            f"{len(groups)} groups for {len(spec.starts)} starts")
    h, w = groups[0].h, groups[0].w
    gs = spec.group_size
    first = np.zeros((h, w, b), dtype=groups[0].dtype)
    delta = np.zeros((h, w, b), dtype=groups[0].dtype)
    count = np.zeros(b, dtype=np.int64)
    covered_to = 0  # starts are sorted, so coverage is always a prefix
    for t, s in zip(groups, spec.starts):
        if t.shape != (1, h, w, gs):
            raise ShapeError(f"group tensor {t.shape} inconsistent with spec")
        if s > covered_to:
            raise RuntimeError(
                "band coverage gap: group spec invariant violated")
        overlap = min(covered_to, s + gs) - s
        first[:, :, s + overlap:s + gs] = t.data[0][:, :, overlap:]
        delta[:, :, s:s + overlap] += \
            t.data[0][:, :, :overlap] - first[:, :, s:s + overlap]
        count[s:s + gs] += 1
        covered_to = max(covered_to, s + gs)
    if covered_to < b:
        raise RuntimeError("band coverage gap: group spec invariant violated")
    return HsiCube(first + delta / count)


# ---------------------------------------------------------------------------
# degradation
# ---------------------------------------------------------------------------

def _halve(data: np.ndarray) -> np.ndarray:
    return (data[0::2, 0::2] + data[0::2, 1::2]
            + data[1::2, 0::2] + data[1::2, 1::2]) * 0.25


def area_downsample(cube: HsiCube, factor: int) -> HsiCube:
    """Each output pixel is the mean of its factor x factor source block.

    Power-of-two factors reduce by repeated 2x halving, which makes
    downsampling by 4 bit-identical to downsampling by 2 twice.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if cube.h % factor or cube.w % factor:
        raise ValueError(
            f"dims {cube.h}x{cube.w} not divisible by factor {factor}")
    data = cube.data
    f = factor
    while f % 2 == 0:
        data = _halve(data)
        f //= 2
    if f > 1:
        h, w, b = data.shape
        data = data.reshape(h // f, f, w // f, f, b).mean(axis=(1, 3))
    return HsiCube(data, cube.band_wavelengths)


# ---------------------------------------------------------------------------
# patch protocol
# ---------------------------------------------------------------------------

@dataclass
class PatchSet:
    """Patch origins over a source cube; every patch lies fully inside."""

    patch_size: int
    origins: list[tuple[int, int]]
    cube: HsiCube = field(repr=False)

    def __len__(self) -> int:
        return len(self.origins)

    def patch(self, index: int) -> np.ndarray:
        r, c = self.origins[index]
        p = self.patch_size
        return self.cube.data[r:r + p, c:c + p, :]


def _axis_origins(extent: int, patch: int, stride: int) -> list[int]:
    starts = list(range(0, extent - patch + 1, stride))
    if starts[-1] + patch < extent:
        starts.append(extent - patch)
    return starts


def extract_patches(cube: HsiCube, patch_size: int,
                    stride: int) -> PatchSet:
    """Grid of patch origins; trailing patches anchor to the far edge."""
    if patch_size > min(cube.h, cube.w):
        raise ValueError(
            f"patch {patch_size} larger than cube {cube.h}x{cube.w}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    rows = _axis_origins(cube.h, patch_size, stride)
    cols = _axis_origins(cube.w, patch_size, stride)
    return PatchSet(patch_size=patch_size,
                    origins=[(r, c) for r in rows for c in cols],
                    cube=cube)


def _rects_overlap(a: tuple[int, int], b: tuple[int, int], size: int) -> bool:
    return not (a[0] + size <= b[0] or b[0] + size <= a[0]
                or a[1] + size <= b[1] or b[1] + size <= a[1])


DATASET_KINDS = ("paviac-like", "paviau-like")


def test_patch_origin(cube: HsiCube, dataset_kind: str,
                      patch_size: int) -> tuple[int, int]:
    """Bottom-center for paviac-like cubes, top-left for paviau-like."""
    if dataset_kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {dataset_kind!r}; "
                         f"expected one of {DATASET_KINDS}")
    if patch_size > min(cube.h, cube.w):
        raise ValueError(
            f"patch {patch_size} larger than cube {cube.h}x{cube.w}")
    if dataset_kind == "paviac-like":
        return cube.h - patch_size, (cube.w - patch_size) // 2
    return 0, 0


def protocol_split(cube: HsiCube, dataset_kind: str, patch_size: int,
                   stride: int | None = None
                   ) -> tuple[PatchSet, tuple[int, int]]:
    """Held-out test patch plus training patches that never touch it."""
    if stride is None:
        stride = max(1, patch_size // 2)
    test_origin = test_patch_origin(cube, dataset_kind, patch_size)
    grid = extract_patches(cube, patch_size, stride)
    train_origins = [o for o in grid.origins
                     if not _rects_overlap(o, test_origin, patch_size)]
    if not train_origins:
        raise ValueError(
            f"cube {cube.h}x{cube.w} leaves no training patch disjoint "
            f"from the test patch")
    train = PatchSet(patch_size=patch_size, origins=train_origins, cube=cube)
    return train, test_origin
