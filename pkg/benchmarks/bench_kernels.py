#!/usr/bin/env python3
"""Benchmark the compiled convolution core against the NumPy fallback.

Times the forward and backward kernels on shapes representative of
training (batch 4, 16..72 px, 16..116 channels) and prints per-kernel
medians plus the compiled-vs-NumPy speedup.  `--train-step` additionally
times one full optimization step (forward, loss, backward, Adam) under
each dispatch mode.

    python benchmarks/bench_kernels.py [--repeats N] [--quick] [--train-step]
"""

import argparse
import statistics
import time

import numpy as np

from dsdcn import _pykernels
from dsdcn import kernels as dispatch

try:
    from dsdcn import _ckernels
except ImportError:
    _ckernels = None

KERNEL_NAMES = [
    "conv2d_forward", "conv2d_backward_data", "conv2d_backward_weights",
    "depthwise_forward", "depthwise_backward_data",
    "depthwise_backward_weights", "transpose_forward",
    "transpose_backward_data", "transpose_backward_weights",
]


def cases(quick: bool):
    shapes = [("small", 4, 16, 16), ("medium", 4, 36, 32)]
    if not quick:
        shapes.append(("large", 1, 72, 116))
    for label, n, hw, c in shapes:
        rng = np.random.default_rng(0)
        x = rng.normal(size=(n, hw, hw, c))
        w3 = rng.normal(size=(3, 3, c, c))
        wd = rng.normal(size=(3, 3, c, 1))
        wt = rng.normal(size=(4, 4, c, c))
        b = rng.normal(size=c)
        bd = rng.normal(size=c)
        gy = rng.normal(size=(n, hw, hw, c))
        gy2 = rng.normal(size=(n, 2 * hw, 2 * hw, c))
        yield label, [
            ("conv2d fwd d=1", lambda k: k.conv2d_forward(x, w3, b, 1)),
            ("conv2d fwd d=3", lambda k: k.conv2d_forward(x, w3, b, 3)),
            ("conv2d bwd data", lambda k: k.conv2d_backward_data(gy, w3, 1)),
            ("conv2d bwd weights",
             lambda k: k.conv2d_backward_weights(x, gy, 1, 3, 3)),
            ("depthwise fwd", lambda k: k.depthwise_forward(x, wd, bd)),
            ("depthwise bwd data",
             lambda k: k.depthwise_backward_data(gy, wd)),
            ("transpose fwd s=2", lambda k: k.transpose_forward(x, wt, b, 2)),
            ("transpose bwd data",
             lambda k: k.transpose_backward_data(gy2, wt, 2)),
        ]


def best_of(fn, repeats: int) -> float:
    times = []
    fn()  # warmup
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def _set_mode(mode: str):
    """Point the dispatch module at one backend (or the auto mix)."""
    for name in KERNEL_NAMES:
        if mode == "numpy" or (_ckernels is None):
            impl = _pykernels
        elif mode == "compiled":
            impl = _ckernels
        else:  # mixed: compiled depthwise, NumPy channel mixing
            impl = _ckernels if name.startswith("depthwise") else _pykernels
        setattr(dispatch, name, getattr(impl, name))


def bench_train_step(repeats: int):
    from dsdcn import (AdamState, DsdcnConfig, LossWeights, Tape,
                       TrainConfig, Tensor4, adam_step, backward,
                       dsdcn_forward, init_params, loss_total)

    cfg = DsdcnConfig(group_size=32, base_channels=32, scale=2)
    params = init_params(cfg, 0)
    state = AdamState(params)
    opt = TrainConfig()
    rng = np.random.default_rng(0)
    x = Tensor4(rng.uniform(size=(4, 24, 24, 32)))
    y = Tensor4(rng.uniform(size=(4, 48, 48, 32)))

    def step():
        tape = Tape()
        pred = dsdcn_forward(x, params, tape=tape)
        loss = loss_total(y, pred, LossWeights(), tape)
        params.zero_grad()
        backward(tape, loss)
        adam_step(params, state, opt)

    modes = ["numpy", "mixed", "compiled"] if _ckernels is not None \
        else ["numpy"]
    print("\n== full optimization step "
          "(batch 4, 24px -> 48px, 32 bands, width 32) ==")
    for mode in modes:
        _set_mode(mode)
        print(f"{mode:<10}{best_of(step, repeats) * 1e3:>10.1f}ms")
    _set_mode("mixed" if _ckernels is not None else "numpy")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--quick", action="store_true",
                        help="skip the large case")
    parser.add_argument("--train-step", action="store_true",
                        help="also time one optimization step per mode")
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled backend not built; timing NumPy only")
    backends = [("numpy", _pykernels)]
    if _ckernels is not None:
        backends.append(("compiled", _ckernels))

    for label, kernel_cases in cases(args.quick):
        print(f"\n== {label} ==")
        header = f"{'kernel':<22}" + "".join(f"{name:>12}" for name, _ in
                                             backends)
        if len(backends) == 2:
            header += f"{'speedup':>10}"
        print(header)
        for name, fn in kernel_cases:
            row = f"{name:<22}"
            timings = []
            for _, impl in backends:
                t = best_of(lambda impl=impl: fn(impl), args.repeats)
                timings.append(t)
                row += f"{t * 1e3:>10.2f}ms"
            if len(timings) == 2:
                row += f"{timings[0] / timings[1]:>9.2f}x"
            print(row)

    if args.train_step:
        bench_train_step(args.repeats)


if __name__ == "__main__":
    main()
