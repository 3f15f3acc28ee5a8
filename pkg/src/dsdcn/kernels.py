"""Backend selection for the convolution hot loops.

Two complete implementations exist: a Cython extension and a NumPy
fallback.  Benchmarks (`benchmarks/bench_kernels.py`) show a clean split:
the compiled loops win the depthwise kernels at every size (the NumPy
route pays broadcasting overhead per tap), while the channel-mixing
convolutions belong to the BLAS-backed NumPy tap loop at realistic
widths.  The default "auto" mode dispatches accordingly and degrades to
all-NumPy when the extension is missing.

Set ``DSDCN_KERNELS`` to ``numpy`` or ``compiled`` to force one backend
for every kernel (``compiled`` raises if the extension is not built).
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

# kernels where the compiled implementation measures faster across sizes
_COMPILED_PREFERRED = ("depthwise_forward", "depthwise_backward_data",
                       "depthwise_backward_weights")

_MODE = os.environ.get("DSDCN_KERNELS", "auto").strip().lower() or "auto"
if _MODE not in ("auto", "numpy", "compiled"):
    raise ImportError(f"unknown DSDCN_KERNELS value: {_MODE!r}")
if _MODE == "compiled" and _ckernels is None:
    raise ImportError(
        "DSDCN_KERNELS=compiled but the dsdcn._ckernels extension is not "
        "built; install with the Cython toolchain or unset the variable")


def _select(name: str):
    if _MODE == "numpy" or _ckernels is None:
        return getattr(_pykernels, name)
    if _MODE == "compiled" or name in _COMPILED_PREFERRED:
        return getattr(_ckernels, name)
    return getattr(_pykernels, name)


def active_backend() -> str:
    """'mixed' (compiled depthwise + BLAS convolutions), 'numpy', or
    'compiled'."""
    if _MODE == "auto":
        return "mixed" if _ckernels is not None else "numpy"
    return _MODE


def available_backends() -> list[str]:
    names = ["numpy"]
    if _ckernels is not None:
        names.insert(0, "compiled")
    return names


conv2d_forward = _select("conv2d_forward")
conv2d_backward_data = _select("conv2d_backward_data")
conv2d_backward_weights = _select("conv2d_backward_weights")
depthwise_forward = _select("depthwise_forward")
depthwise_backward_data = _select("depthwise_backward_data")
depthwise_backward_weights = _select("depthwise_backward_weights")
transpose_forward = _select("transpose_forward")
transpose_backward_data = _select("transpose_backward_data")
transpose_backward_weights = _select("transpose_backward_weights")
