#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three hot paths (single-point energies inside a proposal loop,
insertion-energy grids, and full Metropolis sweeps) on both backends and
verifies they produce the same numbers.

Run:  python benchmarks/bench_backends.py
"""

import time

import numpy as np

from torusgas import _ref

try:
    from torusgas import _hot
except ImportError:
    _hot = None

L = 20.0
KIND = 1
P = np.array([1.0, 0.5, 0.0, 0.0])  # square well J=1, R=0.5


def timeit(fn, *args, repeat=5, **kw):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_rel_energy(mod, pts, queries):
    def run():
        acc = 0.0
        for q in queries:
            acc += mod.rel_energy(pts, q, L, KIND, P)
        return acc
    return timeit(run)


def bench_grid(mod, pts, grid, loops=50):
    def run():
        out = None
        for _ in range(loops):
            out = mod.rel_energy_grid(pts, grid, L, KIND, P)
        return out
    return timeit(run)


def bench_sweeps(mod, u):
    def run():
        buf = np.zeros((len(u) + 64, 1))
        n, counts = mod.run_proposals(buf, 0, L, KIND, P, 0.2,
                                      0.25, 0.25, 0.15, u)
        return n, counts, buf[:n].copy()
    return timeit(run, repeat=3)


def main():
    rng = np.random.default_rng(0)
    pts = rng.random((24, 1)) * L
    queries = rng.random((2000, 1)) * L
    grid = rng.random((4096, 1)) * L
    u = rng.random((200_000, 4))

    backends = [("python", _ref)] + ([("compiled", _hot)] if _hot else [])
    if _hot is None:
        print("compiled backend not built; showing the fallback only\n")

    rows = []
    results = {}
    for name, mod in backends:
        t1, r1 = bench_rel_energy(mod, pts, queries)
        t2, r2 = bench_grid(mod, pts, grid)
        t3, r3 = bench_sweeps(mod, u)
        rows.append((name, t1, t2, t3))
        results[name] = (r1, r2, r3)

    print(f"{'backend':<10} {'2k point energies':>18} {'50x 4k-grid':>14} "
          f"{'200k proposals':>15}")
    for name, t1, t2, t3 in rows:
        print(f"{name:<10} {t1 * 1e3:>15.1f} ms {t2 * 1e3:>11.1f} ms "
              f"{t3 * 1e3:>12.1f} ms")

    if len(rows) == 2:
        a, b = rows
        print(f"\nspeedup (python/compiled): "
              f"{a[1] / b[1]:.1f}x energies, {a[2] / b[2]:.1f}x grids, "
              f"{a[3] / b[3]:.1f}x sweeps")
        (e1, g1, s1), (e2, g2, s2) = results["python"], results["compiled"]
        assert abs(e1 - e2) < 1e-9
        assert np.allclose(g1, g2, rtol=1e-12)
        assert s1[0] == s2[0] and np.array_equal(s1[1], s2[1])
        assert np.allclose(s1[2], s2[2])
        print("agreement check: identical results on all three paths")


if __name__ == "__main__":
    main()
