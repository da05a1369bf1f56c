"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run: python3 benchmarks/bench_kernels.py [--repeats 5]

Force the numpy-only path with CPRISM_NUMBA=0 (the jit column then reads
n/a). Sizes mirror the desk-scale workloads: population evaluation at GA
scale, matching at case-study scale, isotonic regression and Gower at
projection scale.
"""

import argparse
import time

import numpy as np

from cprism import kernels


def time_call(fn, *args, repeats=5):
    fn(*args)  # warm-up (includes jit compilation)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def eval_population_case(rng):
    n, d, n_cov, P = 3000, 30, 8, 200
    atom_cov = np.sort(rng.integers(0, n_cov, size=d)).astype(np.int64)
    X = np.zeros((n, d), dtype=np.uint8)
    for cov in np.unique(atom_cov):
        cols = np.flatnonzero(atom_cov == cov)
        X[np.arange(n), cols[rng.integers(0, len(cols), size=n)]] = 1
    genomes = (rng.random((P, d)) < 0.4).astype(np.uint8)
    treatment = (rng.random(n) < 0.5).astype(np.uint8)
    outcome = rng.standard_normal(n)
    weights = rng.uniform(1, 4, size=n)
    return (genomes, X, atom_cov, treatment, outcome, weights)


def greedy_match_case(rng):
    return (rng.random(4000), rng.random(6000), 0.1)


def isotonic_case(rng):
    y = rng.standard_normal(200_000)
    w = np.ones_like(y)
    return (y, w)


def gower_case(rng):
    return (rng.random((1500, 6)), rng.integers(0, 4, size=(1500, 4)).astype(np.int64))


CASES = [
    ("eval_population (P=200, n=3000, d=30)", eval_population_case,
     kernels.eval_population_numpy, kernels.eval_population_jit),
    ("greedy_match (4000 x 6000)", greedy_match_case,
     kernels.greedy_match_numpy, kernels.greedy_match_jit),
    ("isotonic_fit (200k)", isotonic_case,
     kernels.isotonic_fit_numpy, kernels.isotonic_fit_jit),
    ("gower_matrix (1500 units, 10 covariates)", gower_case,
     kernels.gower_matrix_numpy, kernels.gower_matrix_jit),
]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"numba enabled: {kernels.NUMBA_ENABLED}")
    header = f"{'kernel':45s} {'numpy':>10s} {'jit':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, make_case, np_fn, jit_fn in CASES:
        case = make_case(rng)
        t_np = time_call(np_fn, *case, repeats=args.repeats)
        if jit_fn is not None:
            t_jit = time_call(jit_fn, *case, repeats=args.repeats)
            ratio = t_np / t_jit if t_jit > 0 else float("inf")
            print(f"{name:45s} {t_np * 1e3:9.2f}ms {t_jit * 1e3:9.2f}ms {ratio:7.1f}x")
        else:
            print(f"{name:45s} {t_np * 1e3:9.2f}ms {'n/a':>10s} {'':>8s}")


if __name__ == "__main__":
    main()
