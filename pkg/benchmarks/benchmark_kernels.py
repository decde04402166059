#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Covers the four hot loops: max-flow, the 3-D feasibility scan, the
hypergeometric upper tail, and the bounded level-set DP.

Usage:
    python benchmarks/benchmark_kernels.py
    python benchmarks/benchmark_kernels.py --repeats 5 --output results.json
"""

import argparse
import json
import time

import numpy as np

from attribound._kernels import jit as jit_kernels
from attribound._kernels import ref as ref_kernels

BACKENDS = {"numba": jit_kernels, "numpy": ref_kernels}


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def warmup():
    print("Warming up JIT compilation...")
    cap = np.zeros((4, 4))
    cap[0, 1] = cap[1, 3] = 1.0
    jit_kernels.dinic_maxflow(cap, 0, 3, 1e-12)
    jit_kernels.grid_scan_descending(
        np.array([0.5]), np.array([0.1]), np.array([0.1]),
        np.array([[1.0, 0.0, 0.0]]), np.array([1.0]), 1.0, 0.01, 0.01, 0.01)
    jit_kernels.hypergeom_uppertail(3, 10, 20, 6)
    jit_kernels.bounded_level_dp(np.zeros(2, dtype=np.int64),
                                 np.ones(2, dtype=np.int64))
    print("done.\n")


def bench_maxflow(repeats, rng):
    rows = []
    print("MAX FLOW (dense capacity matrix)")
    print(f"{'n':>6} {'numba (s)':>12} {'numpy (s)':>12} {'speedup':>9}")
    for n in (50, 200, 600):
        cap = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
        np.fill_diagonal(cap, 0.0)
        times = {}
        for name, mod in BACKENDS.items():
            times[name] = timeit(
                lambda m=mod: m.dinic_maxflow(cap.copy(), 0, n - 1, 1e-12),
                repeats)
        speedup = times["numpy"] / times["numba"]
        print(f"{n:>6} {times['numba']:>12.4f} {times['numpy']:>12.4f} "
              f"{speedup:>8.1f}x")
        rows.append({"n": n, **times, "speedup": speedup})
    return rows


def bench_grid_scan(repeats, rng):
    rows = []
    print("\nGRID SCAN (descending feasibility search)")
    print(f"{'steps':>6} {'n_half':>7} {'numba (s)':>12} {'numpy (s)':>12} "
          f"{'speedup':>9}")
    for steps, nh in ((60, 80), (120, 150), (200, 300)):
        lam = rng.normal(size=(nh, 3))
        lam[:, 2] = np.abs(lam[:, 2])
        lam /= np.linalg.norm(lam, axis=1, keepdims=True)
        rhs = rng.random(nh) * 0.02  # tight: forces a deep scan
        m1 = np.linspace(1.0, 0.0, steps).copy()
        c2 = np.linspace(0.0, 0.5, steps).copy()
        c3 = np.linspace(0.0, 0.02, steps).copy()
        times = {}
        for name, mod in BACKENDS.items():
            times[name] = timeit(
                lambda m=mod: m.grid_scan_descending(
                    m1, c2, c3, lam, rhs, 0.5, 1e-3, 1e-3, 1e-4), repeats)
        speedup = times["numpy"] / times["numba"]
        print(f"{steps:>6} {nh:>7} {times['numba']:>12.4f} "
              f"{times['numpy']:>12.4f} {speedup:>8.1f}x")
        rows.append({"steps": steps, "n_half": nh, **times, "speedup": speedup})
    return rows


def bench_hypergeom(repeats):
    rows = []
    print("\nHYPERGEOMETRIC UPPER TAIL")
    print(f"{'population':>12} {'numba (s)':>12} {'numpy (s)':>12} "
          f"{'speedup':>9}")
    cases = [(10_000, 2_500, 1_000, 260),
             (10_000_000, 2_500_000, 600_000, 150_500),
             (100_000_000, 30_000_000, 60_000_000, 18_001_000)]
    for pop, succ, draws, w in cases:
        times = {}
        for name, mod in BACKENDS.items():
            times[name] = timeit(
                lambda m=mod: m.hypergeom_uppertail(w, succ, pop, draws),
                repeats)
        speedup = times["numpy"] / times["numba"]
        print(f"{pop:>12} {times['numba']:>12.5f} {times['numpy']:>12.5f} "
              f"{speedup:>8.1f}x")
        rows.append({"population": pop, **times, "speedup": speedup})
    return rows


def bench_level_dp(repeats, rng):
    rows = []
    print("\nBOUNDED LEVEL DP")
    print(f"{'units':>6} {'cap sum':>8} {'numba (s)':>12} {'numpy (s)':>12} "
          f"{'speedup':>9}")
    for n, cap_max in ((30, 40), (50, 120), (80, 250)):
        hi = rng.integers(1, cap_max + 1, size=n)
        lo = (rng.integers(0, 1000, size=n) % (hi + 1)).astype(np.int64)
        times = {}
        for name, mod in BACKENDS.items():
            times[name] = timeit(
                lambda m=mod: m.bounded_level_dp(lo, hi), repeats)
        speedup = times["numpy"] / times["numba"]
        print(f"{n:>6} {int(hi.sum()):>8} {times['numba']:>12.4f} "
              f"{times['numpy']:>12.4f} {speedup:>8.1f}x")
        rows.append({"units": n, "cap_sum": int(hi.sum()), **times,
                     "speedup": speedup})
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3,
                        help="best-of repeats per measurement")
    parser.add_argument("--output", type=str, default=None,
                        help="optional JSON results file")
    args = parser.parse_args()

    warmup()
    rng = np.random.default_rng(7)
    results = {
        "maxflow": bench_maxflow(args.repeats, rng),
        "grid_scan": bench_grid_scan(args.repeats, rng),
        "hypergeom": bench_hypergeom(args.repeats),
        "level_dp": bench_level_dp(args.repeats, rng),
    }
    if args.output:
        with open(args.output, "w") as handle:
            json.dump(results, handle, indent=2)
        print(f"\nResults written to {args.output}")


if __name__ == "__main__":
    main()
