"""Time the metric kernels under numba and numpy, plus one full metric pass.

    python3 benchmarks/bench_kernels.py [--size 256] [--repeats 5]

Numba timings exclude the first (compiling) call.
"""
import argparse
import time

import numpy as np

from mvanet import _kernels
from mvanet.metrics import _GAUSS, compute_all


def _median(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    pred = rng.random((args.size, args.size))
    gt = rng.random((args.size, args.size)) < 0.05
    img = rng.random((args.size, args.size))
    calls = {
        "threshold_counts": lambda k: k["threshold_counts"](pred, gt),
        "nearest_foreground": lambda k: k["nearest_foreground"](gt),
        "convolve": lambda k: k["convolve"](img, _GAUSS),
    }
    backends = {"numpy": _kernels.NUMPY_KERNELS}
    if _kernels.NUMBA_KERNELS:
        backends["numba"] = _kernels.NUMBA_KERNELS
    print(f"size {args.size}x{args.size}, active backend {_kernels.BACKEND}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends))
    for name, call in calls.items():
        row = [_median(lambda: call(k), args.repeats) for k in backends.values()]
        print(f"{name:<20}" + "".join(f"{t * 1000:>10.2f}ms" for t in row))
    total = _median(lambda: compute_all([pred], [gt]), args.repeats)
    print(f"{'compute_all':<20}{total * 1000:>10.2f}ms ({_kernels.BACKEND})")


if __name__ == "__main__":
    main()
