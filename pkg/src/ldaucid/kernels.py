"""Hot inner loops, each with a numba and a pure-numpy implementation.

``min_assignment_cost`` dispatches to numba or numpy according to
:data:`ldaucid._accel.USE_NUMBA`. ``match_diffs`` always uses numpy: its
batched stable argsort beats the per-row numba loop (see
``benchmarks/bench_kernels.py``). Both implementations of each kernel are
exported with ``_nb`` / ``_np`` suffixes so tests and the benchmark can
compare them directly.
"""
from itertools import permutations

import numpy as np

from ._accel import USE_NUMBA, njit


def match_diffs_np(px, py):
    """Per-row sorted-matching residuals.

    For each row ``l`` the entries of ``px[l]`` and ``py[l]`` are sorted with a
    stable sort and paired rank by rank. Returns ``d`` with
    ``d[l, j] = px[l, j] - py[l, m]`` where ``m`` is the entry of ``py[l]``
    holding the same rank as ``px[l, j]``.
    """
    s = np.argsort(px, axis=1, kind="stable")
    t = np.argsort(py, axis=1, kind="stable")
    rows = np.arange(px.shape[0])[:, None]
    matched = np.empty_like(px)
    matched[rows, s] = py[rows, t]
    return px - matched


@njit
def match_diffs_nb(px, py):
    n_proj, m = px.shape
    out = np.empty((n_proj, m))
    for l in range(n_proj):
        s = np.argsort(px[l], kind="mergesort")
        t = np.argsort(py[l], kind="mergesort")
        for i in range(m):
            out[l, s[i]] = px[l, s[i]] - py[l, t[i]]
    return out


def min_assignment_cost_np(cost):
    """Minimum of ``sum_i cost[i, perm[i]]`` over all permutations (brute force)."""
    n = cost.shape[0]
    perms = np.array(list(permutations(range(n))), dtype=np.int64)
    totals = cost[np.arange(n), perms].sum(axis=1)
    return float(totals.min())


@njit
def min_assignment_cost_nb(cost):
    # Heap's algorithm, iterative form
    n = cost.shape[0]
    perm = np.arange(n)
    c = np.zeros(n, dtype=np.int64)
    best = 0.0
    for i in range(n):
        best += cost[i, perm[i]]
    i = 1
    while i < n:
        if c[i] < i:
            if i % 2 == 0:
                perm[0], perm[i] = perm[i], perm[0]
            else:
                perm[c[i]], perm[i] = perm[i], perm[c[i]]
            total = 0.0
            for r in range(n):
                total += cost[r, perm[r]]
            if total < best:
                best = total
            c[i] += 1
            i = 1
        else:
            c[i] = 0
            i += 1
    return best


match_diffs = match_diffs_np
min_assignment_cost = min_assignment_cost_nb if USE_NUMBA else min_assignment_cost_np
