import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dsdcn import kernels as kernel_dispatch
from dsdcn import _pykernels

try:
    from dsdcn import _ckernels
except ImportError:
    _ckernels = None

_KERNEL_NAMES = [
    "conv2d_forward", "conv2d_backward_data", "conv2d_backward_weights",
    "depthwise_forward", "depthwise_backward_data",
    "depthwise_backward_weights", "transpose_forward",
    "transpose_backward_data", "transpose_backward_weights",
]


@pytest.fixture(params=kernel_dispatch.available_backends())
def backend(request, monkeypatch):
    """Runs the test once per available kernel backend."""
    impl = _ckernels if request.param == "compiled" else _pykernels
    for name in _KERNEL_NAMES:
        monkeypatch.setattr(kernel_dispatch, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
