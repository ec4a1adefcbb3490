"""Benchmark the compiled kernels against the pure-Python fallback.

Usage:
    python benchmarks/bench_kernels.py [--size 64] [--repeat 20]

Times the three hot kernels (cross-correlation, channel normalization,
rollout cost evaluation) on both backends and reports the speedup. Also
checks that the outputs are bitwise identical, since both backends must
accumulate in the same order.
"""

import argparse
import time

import numpy as np

from stgrid.kernels import _pure

try:
    from stgrid.kernels import _core
except ImportError:
    _core = None


def timeit(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--states", type=int, default=3)
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not built; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    s, n = args.size, args.states
    grid = rng.random((n, s, s))
    weights = rng.random((n, n, 3, 3))
    bias = rng.random(n)
    phi = rng.random((n, s, s)) + 0.1
    cost_map = rng.standard_normal((s, s))
    vels = rng.integers(-1, 2, size=(256, 16, 2)).astype(np.int64)

    cases = [
        ("cross_correlate", (grid, weights, bias)),
        ("normalize_channels", (phi,)),
        ("rollout_costs", (cost_map, vels, s // 2, s // 2)),
    ]
    print(f"grid {s}x{s}, {n} channels, best of {args.repeat}")
    print(f"{'kernel':<20}{'pure (ms)':>12}{'cython (ms)':>12}{'speedup':>9}")
    for name, case_args in cases:
        pure_fn = getattr(_pure, name)
        core_fn = getattr(_core, name)
        assert np.array_equal(pure_fn(*case_args), core_fn(*case_args)), name
        t_pure = timeit(pure_fn, case_args, args.repeat) * 1e3
        t_core = timeit(core_fn, case_args, args.repeat) * 1e3
        print(f"{name:<20}{t_pure:>12.3f}{t_core:>12.3f}{t_pure / t_core:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
