"""Compare the numba and numpy implementations of the hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow the training loop: L projections of an M-point minibatch
(sort-matching), and the n <= 8 brute-force assignment used by the exact
small-n Wasserstein solver. The first numba call is excluded (compilation or
cache load).
"""
import argparse
import timeit

import numpy as np

from ldaucid import kernels

SHAPES = [(64, 64), (64, 256), (256, 1024)]
ASSIGN_N = [5, 6, 7, 8]


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'kernel':<28}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for L, M in SHAPES:
        px, py = rng.normal(size=(L, M)), rng.normal(size=(L, M))
        kernels.match_diffs_nb(px, py)
        assert np.array_equal(kernels.match_diffs_np(px, py), kernels.match_diffs_nb(px, py))
        number = max(1, 20000 // (L * M // 64))
        t_np = best_of(lambda: kernels.match_diffs_np(px, py), args.repeat, number)
        t_nb = best_of(lambda: kernels.match_diffs_nb(px, py), args.repeat, number)
        print(f"{f'match_diffs L={L} M={M}':<28}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x")

    for n in ASSIGN_N:
        cost = rng.random((n, n))
        kernels.min_assignment_cost_nb(cost)
        number = 3 if n == 8 else 10
        t_np = best_of(lambda: kernels.min_assignment_cost_np(cost), args.repeat, number)
        t_nb = best_of(lambda: kernels.min_assignment_cost_nb(cost), args.repeat, number)
        print(f"{f'min_assignment_cost n={n}':<28}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
