"""Dense NHWC tensor engine with reverse-mode differentiation.

The carriers are deliberately minimal: `Tensor4` for batched feature maps,
`ConvKernel` for learnable filters, `Scalar` for loss values, and `Tape`
recording executed ops so `backward` can replay them in reverse.  Only the
operations the super-resolution network needs are provided; there is no
broadcasting and no strided forward convolution.

All ops are pure with respect to their inputs.  A Tape must not be shared
between concurrent computations; tensors may be read concurrently.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K

_FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return np.ascontiguousarray(arr)


class Tensor4:
    """Batched feature map of shape (n, h, w, c) with optional gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = _as_float_array(data, dtype)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor4 needs 4 dims, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"Tensor4 dims must all be >= 1, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def c(self) -> int:
        return self.data.shape[3]

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor "
                f"{self.data.shape}")
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor4(shape={self.data.shape}, dtype={self.data.dtype})"


class ConvKernel:
    """Learnable convolution filter: weight (kh, kw, c_in, c_out) + bias.

    Depthwise kernels use c_out == 1 (one multiplier per input channel)
    and a bias of length c_in.  `dilation`/`stride` are defaults the ops
    pick up when not overridden.
    """

    __slots__ = ("weight", "bias", "dilation", "stride", "trainable",
                 "wgrad", "bgrad")

    def __init__(self, weight, bias=None, *, dilation: int = 1,
                 stride: int = 1, trainable: bool = True, depthwise=False):
        w = _as_float_array(weight)
        if w.ndim != 4:
            raise ValueError(f"kernel weight needs 4 dims, got {w.shape}")
        if min(w.shape) < 1:
            raise ValueError(f"kernel dims must all be >= 1, got {w.shape}")
        if dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {dilation}")
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        if depthwise and w.shape[3] != 1:
            raise ValueError(
                f"depthwise kernel needs exactly one output multiplier per "
                f"channel, got c_out={w.shape[3]}")
        n_bias = w.shape[2] if depthwise else w.shape[3]
        if bias is None:
            b = np.zeros(n_bias, dtype=w.dtype)
        else:
            b = _as_float_array(bias, w.dtype)
            if b.shape != (n_bias,):
                raise ValueError(
                    f"bias shape {b.shape} does not match c_out {n_bias}")
        self.weight = w
        self.bias = b
        self.dilation = dilation
        self.stride = stride
        self.trainable = trainable
        self.wgrad = np.zeros_like(w) if trainable else None
        self.bgrad = np.zeros_like(b) if trainable else None

    @property
    def c_in(self) -> int:
        return self.weight.shape[2]

    @property
    def c_out(self) -> int:
        return self.weight.shape[3]

    @property
    def is_depthwise(self) -> bool:
        return self.weight.shape[3] == 1 and self.bias.shape[0] == self.weight.shape[2]

    def zero_grad(self) -> None:
        if self.trainable:
            self.wgrad[...] = 0
            self.bgrad[...] = 0

    def __repr__(self) -> str:
        return (f"ConvKernel(weight={self.weight.shape}, "
                f"dilation={self.dilation}, stride={self.stride})")


class Scalar:
    """A 0-dim value produced by reductions and losses."""

    __slots__ = ("value", "grad")

    def __init__(self, value: float):
        self.value = float(value)
        self.grad = 0.0

    def __repr__(self) -> str:
        return f"Scalar({self.value})"


class Tape:
    """Ordered record of executed ops, replayed in reverse by `backward`.

    Single-writer: one computation per tape.  A second backward pass over
    the same tape is rejected.
    """

    __slots__ = ("_ops", "_used")

    def __init__(self):
        self._ops: list = []
        self._used = False

    def record(self, backward_fn) -> None:
        self._ops.append(backward_fn)

    def __len__(self) -> int:
        return len(self._ops)


def backward(tape: Tape, root: Scalar) -> None:
    """Populate gradients for everything reachable from `root`.

    Parameters flagged trainable but unused by the computation keep their
    zero-initialised gradients.
    """
    if not isinstance(root, Scalar):
        raise ValueError(
            f"backward root must be a scalar, got {type(root).__name__}")
    if tape._used:
        raise RuntimeError("tape has already been traversed")
    tape._used = True
    root.grad = 1.0
    for fn in reversed(tape._ops):
        fn()


# ---------------------------------------------------------------------------
# forward ops
# ---------------------------------------------------------------------------

def _check_channels(x: Tensor4, kernel: ConvKernel) -> None:
    if kernel.c_in != x.c:
        raise ShapeError(
            f"kernel expects {kernel.c_in} input channels, tensor has {x.c}")
    _check_dtype(x, kernel)


def _check_dtype(x: Tensor4, kernel: ConvKernel) -> None:
    if x.dtype != kernel.weight.dtype:
        raise ValueError(
            f"tensor dtype {x.dtype} does not match kernel dtype "
            f"{kernel.weight.dtype}")


def conv2d(x: Tensor4, kernel: ConvKernel, dilation: int | None = None,
           tape: Tape | None = None) -> Tensor4:
    """Stride-1 zero-padded 'same' convolution; output (n, h, w, c_out)."""
    d = kernel.dilation if dilation is None else dilation
    if d < 1:
        raise ValueError(f"dilation must be >= 1, got {d}")
    _check_channels(x, kernel)
    y = Tensor4(K.conv2d_forward(x.data, kernel.weight, kernel.bias, d))
    y.requires_grad = x.requires_grad or kernel.trainable
    if tape is not None and y.requires_grad:
        kh, kw = kernel.weight.shape[:2]

        def back():
            gy = y.grad
            if gy is None:
                return
            if kernel.trainable:
                gw, gb = K.conv2d_backward_weights(x.data, gy, d, kh, kw)
                kernel.wgrad += gw
                kernel.bgrad += gb
            if x.requires_grad:
                x.accumulate_grad(K.conv2d_backward_data(gy, kernel.weight, d))

        tape.record(back)
    return y


def depthwise_conv2d(x: Tensor4, kernel: ConvKernel,
                     tape: Tape | None = None) -> Tensor4:
    """Per-channel spatial filter; channel j of the output depends only on
    channel j of the input."""
    if kernel.weight.shape[3] != 1:
        raise ValueError(
            f"depthwise kernel must have c_out == 1, got {kernel.weight.shape}")
    if kernel.weight.shape[2] != x.c:
        raise ShapeError(
            f"depthwise kernel covers {kernel.weight.shape[2]} channels, "
            f"tensor has {x.c}")
    _check_dtype(x, kernel)
    y = Tensor4(K.depthwise_forward(x.data, kernel.weight, kernel.bias))
    y.requires_grad = x.requires_grad or kernel.trainable
    if tape is not None and y.requires_grad:
        kh, kw = kernel.weight.shape[:2]

        def back():
            gy = y.grad
            if gy is None:
                return
            if kernel.trainable:
                gw, gb = K.depthwise_backward_weights(x.data, gy, kh, kw)
                kernel.wgrad += gw
                kernel.bgrad += gb
            if x.requires_grad:
                x.accumulate_grad(K.depthwise_backward_data(gy, kernel.weight))

        tape.record(back)
    return y


def pointwise_conv2d(x: Tensor4, kernel: ConvKernel,
                     tape: Tape | None = None) -> Tensor4:
    """1x1 convolution: a per-pixel linear map across channels."""
    kh, kw = kernel.weight.shape[:2]
    if kh != 1 or kw != 1:
        raise ValueError(f"pointwise kernel must be 1x1, got {kh}x{kw}")
    _check_channels(x, kernel)
    n, h, w, ci = x.shape
    mat = kernel.weight[0, 0]
    out = x.data.reshape(-1, ci) @ mat + kernel.bias
    y = Tensor4(out.reshape(n, h, w, kernel.c_out))
    y.requires_grad = x.requires_grad or kernel.trainable
    if tape is not None and y.requires_grad:

        def back():
            gy = y.grad
            if gy is None:
                return
            g2 = gy.reshape(-1, kernel.c_out)
            if kernel.trainable:
                kernel.wgrad[0, 0] += x.data.reshape(-1, ci).T @ g2
                kernel.bgrad += g2.sum(axis=0)
            if x.requires_grad:
                x.accumulate_grad((g2 @ mat.T).reshape(x.shape))

        tape.record(back)
    return y


def transpose_conv2d(x: Tensor4, kernel: ConvKernel,
                     stride: int | None = None,
                     tape: Tape | None = None) -> Tensor4:
    """Scatter upsampling; output (n, stride*h, stride*w, c_out).

    Adjoint of the stride-`s` 'same' convolution with the same kernel; at
    stride 1 this is exactly the adjoint of `conv2d`.
    """
    s = kernel.stride if stride is None else stride
    if s < 1:
        raise ValueError(f"stride must be >= 1, got {s}")
    kh, kw = kernel.weight.shape[:2]
    if kh < s or kw < s:
        raise ValueError(
            f"transpose kernel {kh}x{kw} smaller than stride {s} leaves "
            f"unreachable output pixels")
    _check_channels(x, kernel)
    y = Tensor4(K.transpose_forward(x.data, kernel.weight, kernel.bias, s))
    y.requires_grad = x.requires_grad or kernel.trainable
    if tape is not None and y.requires_grad:

        def back():
            gy = y.grad
            if gy is None:
                return
            if kernel.trainable:
                gw, gb = K.transpose_backward_weights(x.data, gy, s, kh, kw)
                kernel.wgrad += gw
                kernel.bgrad += gb
            if x.requires_grad:
                x.accumulate_grad(
                    K.transpose_backward_data(gy, kernel.weight, s))

        tape.record(back)
    return y


def upsample_nearest(x: Tensor4, factor: int,
                     tape: Tape | None = None) -> Tensor4:
    """Replicate each pixel into a factor x factor block."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    y = Tensor4(np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2))
    y.requires_grad = x.requires_grad
    if tape is not None and y.requires_grad:
        n, h, w, c = x.shape

        def back():
            gy = y.grad
            if gy is None:
                return
            x.accumulate_grad(
                gy.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4)))

        tape.record(back)
    return y


def relu(x: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Elementwise max(0, x); gradient is 0 at exactly 0."""
    y = Tensor4(np.maximum(x.data, 0))
    y.requires_grad = x.requires_grad
    if tape is not None and y.requires_grad:

        def back():
            gy = y.grad
            if gy is None:
                return
            x.accumulate_grad(gy * (x.data > 0))

        tape.record(back)
    return y


def concat_channels(*tensors: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Concatenate along the channel axis, in argument order."""
    if len(tensors) < 2:
        raise ValueError("concat_channels needs at least two tensors")
    first = tensors[0]
    for t in tensors[1:]:
        if t.shape[:3] != first.shape[:3]:
            raise ShapeError(
                f"batch/spatial dims differ: {t.shape} vs {first.shape}")
    y = Tensor4(np.concatenate([t.data for t in tensors], axis=3))
    y.requires_grad = any(t.requires_grad for t in tensors)
    if tape is not None and y.requires_grad:
        splits = np.cumsum([t.c for t in tensors])[:-1]

        def back():
            gy = y.grad
            if gy is None:
                return
            for t, g in zip(tensors, np.split(gy, splits, axis=3)):
                if t.requires_grad:
                    t.accumulate_grad(g)

        tape.record(back)
    return y


def add(a: Tensor4, b: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Elementwise sum of two identically shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    y = Tensor4(a.data + b.data)
    y.requires_grad = a.requires_grad or b.requires_grad
    if tape is not None and y.requires_grad:

        def back():
            gy = y.grad
            if gy is None:
                return
            if a.requires_grad:
                a.accumulate_grad(gy)
            if b.requires_grad:
                b.accumulate_grad(gy)

        tape.record(back)
    return y


def reduce_sum(x: Tensor4, tape: Tape | None = None) -> Scalar:
    """Sum of all elements, as a scalar tape root."""
    s = Scalar(x.data.sum())
    if tape is not None and x.requires_grad:

        def back():
            x.accumulate_grad(
                np.full(x.shape, s.grad, dtype=x.dtype))

        tape.record(back)
    return s
