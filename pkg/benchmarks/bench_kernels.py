"""Benchmark the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Covers the three hot paths: the conv forward/backward trio at the production
encoder shapes, polyline stamping at plan-raster density, and nearest-neighbor
scene resampling. Both backends compute identical results (see
tests/test_kernels.py); this only compares speed.
"""

import argparse
import math
import time

import numpy as np

from tridentnet._kernels import pykernels, select_backend


def timeit(fn, repeat):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_conv(backend, repeat):
    rng = np.random.default_rng(0)
    rows = []
    # (label, N, C, H, W, K): the plan/scene encoder layer shapes
    cases = [
        ("conv scene L1 400px", 8, 6, 400, 400, 8),
        ("conv scene L2 199px", 8, 8, 199, 199, 16),
        ("conv plan  L1 200px", 8, 2, 200, 200, 8),
    ]
    for label, n, c, h, w, k in cases:
        x = rng.standard_normal((n, c, h, w))
        wk = rng.standard_normal((k, c, 3, 3))
        ho = (h - 3) // 2 + 1
        dy = rng.standard_normal((n, k, ho, ho))
        rows.append((label + " fwd", timeit(lambda: backend.conv2d_fwd(x, wk, 2), repeat)))
        rows.append((label + " bwd_w", timeit(lambda: backend.conv2d_bwd_w(x, dy, 3, 3, 2), repeat)))
        rows.append((label + " bwd_x", timeit(lambda: backend.conv2d_bwd_x(wk, dy, h, w, 2), repeat)))
    return rows


def bench_polyline(backend, repeat):
    rng = np.random.default_rng(1)
    segments = [rng.uniform(-50, 50, (2, 2)) for _ in range(200)]

    def run():
        grid = np.zeros((200, 200), dtype=np.uint8)
        for seg in segments:
            backend.mark_polyline(grid, 0.5, seg, 0.75)

    return [("mark_polyline 200 edges", timeit(run, repeat))]


def bench_sample(backend, repeat):
    rng = np.random.default_rng(2)
    grid = rng.integers(0, 6, (1400, 1400)).astype(np.int32)
    yaw = 0.83

    def run():
        backend.sample_nearest(grid, -140.0, -140.0, 0.2, 3.0, -2.0,
                               math.cos(yaw), math.sin(yaw), 400, 400, 0.2, 0)

    return [("sample_nearest 400px", timeit(run, repeat))]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = [pykernels]
    try:
        backends.append(select_backend("cython"))
    except ImportError:
        print("compiled backend not built; benchmarking the fallback only")

    results = {}
    for backend in backends:
        rows = []
        rows += bench_conv(backend, args.repeat)
        rows += bench_polyline(backend, args.repeat)
        rows += bench_sample(backend, args.repeat)
        results[backend.NAME] = dict(rows)

    labels = list(next(iter(results.values())))
    names = list(results)
    print(f"\n{'kernel':<28}" + "".join(f"{n:>12}" for n in names) +
          ("     speedup" if len(names) == 2 else ""))
    for label in labels:
        line = f"{label:<28}"
        for n in names:
            line += f"{results[n][label] * 1e3:>10.2f}ms"
        if len(names) == 2:
            line += f"{results[names[0]][label] / results[names[1]][label]:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
