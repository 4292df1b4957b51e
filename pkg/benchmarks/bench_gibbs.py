#!/usr/bin/env python3
"""Benchmark the compiled Gibbs kernel against the NumPy fallback.

Runs matched chains (same seed, same draw stream) at the simulation
scale (L=28) and the real-data scale (L=143) and reports iterations per
second plus the speedup. Usage:

    python3 benchmarks/bench_gibbs.py [--iterations N]
"""

import argparse
import time

import numpy as np

from densreg import _gibbs_py
from densreg.gss import HAVE_COMPILED

if HAVE_COMPILED:
    from densreg import _gibbs_core


def problem(n, L, n_groups, seed=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, L))
    groups0 = np.sort(np.arange(L) % n_groups).astype(np.intp)
    beta = np.zeros(L)
    beta[0] = 0.4
    y = X @ beta + 0.3 * rng.standard_normal(n)
    return X, y - y.mean(), groups0


def run(module, X, y, groups0, n_groups, iterations, seed):
    bitgen = np.random.PCG64(np.random.SeedSequence([seed]))
    start = time.perf_counter()
    module.run_chain(
        X, y, groups0, n_groups,
        0.005, 0.001, 0.001, 0.001, 0.001,
        iterations, iterations // 5, 25, bitgen,
    )
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=20_000)
    args = parser.parse_args()

    scales = [
        ("simulation scale", 61, 28, 3),
        ("real-data scale", 61, 143, 12),
    ]
    print(f"compiled kernel available: {HAVE_COMPILED}")
    for name, n, L, G in scales:
        X, y, groups0 = problem(n, L, G)
        t_py = run(_gibbs_py, X, y, groups0, G, args.iterations, seed=9)
        line = (
            f"{name:>16} (n={n}, L={L:>3}, T={args.iterations}): "
            f"python {args.iterations / t_py:>9.0f} it/s"
        )
        if HAVE_COMPILED:
            t_cy = run(_gibbs_core, X, y, groups0, G, args.iterations, seed=9)
            line += f"   compiled {args.iterations / t_cy:>9.0f} it/s   speedup {t_py / t_cy:.1f}x"
        print(line)


if __name__ == "__main__":
    main()
