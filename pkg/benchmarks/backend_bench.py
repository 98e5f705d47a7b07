"""Timing comparison of the numba and numpy kernel backends.

Runs the three hot kernels (knn, farthest_point_indices, octant_pool_batch)
on seeded random clouds at a few sizes and prints per-call wall times for
both implementations. JIT compilation happens in an excluded warmup pass, so
the numbers reflect steady-state throughput.

Usage: python3 benchmarks/backend_bench.py [--sizes 512,1024,2048] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from spa._kernels import numpy_impl

try:
    from spa._kernels import numba_impl
except ImportError:
    numba_impl = None


def _make_inputs(n: int, rng: np.random.Generator):
    points = rng.normal(size=(n, 3))
    attrs = rng.normal(size=(n, 3))
    centers = np.arange(n, dtype=np.int64)
    neighbors = numpy_impl.knn(points, points, 32)
    return points, attrs, centers, neighbors


def _cases(points, attrs, centers, neighbors, m):
    return {
        "knn(k=32)": lambda impl: impl.knn(points, points, 32),
        f"farthest_point_indices(m={m})": lambda impl: impl.farthest_point_indices(
            points, m, 0
        ),
        "octant_pool_batch(k=32)": lambda impl: impl.octant_pool_batch(
            points, attrs, centers, neighbors, True
        ),
    }


def _time(fn, impl, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(impl)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="512,1024,2048")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    impls = [("numpy", numpy_impl)]
    if numba_impl is not None:
        impls.append(("numba", numba_impl))
    else:
        print("numba not importable; timing numpy backend only")

    rng = np.random.default_rng(20240815)
    header = f"{'kernel':34s} {'n':>6s}" + "".join(
        f" {name:>12s}" for name, _ in impls
    )
    if len(impls) == 2:
        header += f" {'speedup':>9s}"
    print(header)
    print("-" * len(header))

    for n in sizes:
        points, attrs, centers, neighbors = _make_inputs(n, rng)
        m = min(128, n // 4)
        for label, fn in _cases(points, attrs, centers, neighbors, m).items():
            for _, impl in impls:
                fn(impl)  # warmup: JIT compile + cache fill, excluded from timing
            times = [_time(fn, impl, args.repeats) for _, impl in impls]
            row = f"{label:34s} {n:6d}" + "".join(f" {t * 1e3:10.2f}ms" for t in times)
            if len(times) == 2 and times[1] > 0:
                row += f" {times[0] / times[1]:8.1f}x"
            print(row)


if __name__ == "__main__":
    main()
