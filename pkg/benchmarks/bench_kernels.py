"""Benchmark the compiled discrepancy core against the numpy fallback.

Run: python benchmarks/bench_kernels.py [--n 800] [--d 7]

Times the three hot kernels (full discrepancy, LHS annealing sweep, pooled
subset scoring) on both back ends and checks that they agree. The two
implementations may differ in floating-point summation order, so agreement
is checked to tight tolerances rather than bitwise.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mlcv import _discrepancy_py as py_impl

try:
    from mlcv import _discrepancy_cy as cy_impl
except ImportError:
    cy_impl = None


def timed(fn, *args, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=800)
    parser.add_argument("--d", type=int, default=7)
    parser.add_argument("--iters", type=int, default=10_000)
    parser.add_argument("--pool", type=int, default=2000)
    parser.add_argument("--subset", type=int, default=None)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n, d = args.n, args.d
    u = np.empty((n, d))
    for j in range(d):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    m = args.subset or n // 2

    backends = [("python", py_impl)]
    if cy_impl is not None:
        backends.append(("compiled", cy_impl))
    else:
        print("compiled back end not available; timing the fallback only")

    print(f"design: n={n} d={d}; anneal iters={args.iters}; pool={args.pool} subset={m}")
    idx = np.sort(
        np.argpartition(rng.random((args.pool, n)), m - 1, axis=1)[:, :m]
    ).astype(np.int64)
    steps = args.iters
    cols = rng.integers(0, d, steps)
    ra = rng.integers(0, n, steps)
    rb = rng.integers(0, n, steps)
    th = rng.random(steps)
    temps = 1e-6 * 0.999 ** np.arange(steps)

    results = {}
    for name, impl in backends:
        row = {}
        val, row["cd2_sq"] = timed(impl.cd2_sq, u)
        (v, pair), row["pair_tables"] = timed(impl.pair_tables, u)
        scores, row["subset_scores"] = timed(impl.subset_scores, v, pair, idx, d)
        (best_u, best_val, init_val), row["anneal"] = timed(
            impl.anneal, u, cols, ra, rb, th, temps, repeats=1
        )
        results[name] = (row, val, scores, best_val, init_val)

    header = f"{'kernel':>15} " + " ".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)
    for key in ("cd2_sq", "pair_tables", "subset_scores", "anneal"):
        cells = [results[name][0][key] for name, _ in backends]
        line = f"{key:>15} " + " ".join(f"{t * 1e3:>10.2f}ms" for t in cells)
        if len(cells) == 2:
            line += f" {cells[0] / cells[1]:>8.1f}x"
        print(line)

    if len(backends) == 2:
        v_py, s_py = results["python"][1], results["python"][2]
        v_cy, s_cy = results["compiled"][1], results["compiled"][2]
        assert abs(v_py - v_cy) < 1e-12 * max(1.0, abs(v_py)), "cd2 mismatch"
        assert np.allclose(s_py, s_cy, rtol=1e-9, atol=1e-11), "subset score mismatch"
        print("back ends agree on discrepancies and subset scores")
        b_py, i_py = results["python"][3], results["python"][4]
        b_cy, i_cy = results["compiled"][3], results["compiled"][4]
        print(f"anneal: init {i_py:.6g}, best python {b_py:.6g}, best compiled {b_cy:.6g}")
        assert b_py <= i_py and b_cy <= i_cy, "annealing worsened a design"
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
