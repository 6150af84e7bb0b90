"""Sliced Wasserstein distance between equal-size empirical samples.

The estimator averages, over ``L`` random unit directions, the closed-form
1-D squared transport cost between the projected samples:

    SW2(X, Y) ~= (1/L) sum_l sum_i (<g_l, x_(s_l[i])> - <g_l, y_(t_l[i])>)^2

where ``s_l`` and ``t_l`` sort the projections. The inner sum is over sample
points, not averaged; pass ``normalize_by_m=True`` to divide by the sample
count ``M``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import ShapeError, ValidationError

DEFAULT_PROJECTIONS = 64
EXACT_MAX_N = 8


@dataclass(frozen=True)
class ProjectionSet:
    directions: np.ndarray
    seed: int | None = None

    @property
    def n_projections(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def sample_projections(p: int, n_projections: int = DEFAULT_PROJECTIONS, seed=None) -> ProjectionSet:
    """Draw directions uniformly on the unit sphere in ``R^p`` (normalised Gaussians)."""
    if p < 1 or n_projections < 1:
        raise ValidationError(f"need p >= 1 and L >= 1, got p={p}, L={n_projections}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_projections, p))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero draw has probability zero; redraw defensively
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), p))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return ProjectionSet(g / norms, seed if isinstance(seed, (int, np.integer)) else None)


def wasserstein1d_sq(a, b) -> float:
    """Sum of squared differences between the sorted samples ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size == 0:
        raise ValidationError(f"need equal non-zero lengths, got {a.size} and {b.size}")
    d = np.sort(a, kind="stable") - np.sort(b, kind="stable")
    return float(d @ d)


def _check(X, Y, proj):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeError("X and Y must be 2-D")
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(f"row counts differ: {X.shape[0]} vs {Y.shape[0]}; subsample first")
    if X.shape[1] != Y.shape[1] or X.shape[1] != proj.dim:
        raise ShapeError(f"widths {X.shape[1]}, {Y.shape[1]} vs projection dim {proj.dim}")
    if X.shape[0] == 0:
        raise ValidationError("empty sample sets")
    return X, Y


def _diffs(X, Y, proj):
    g = proj.directions
    return kernels.match_diffs(g @ X.T, g @ Y.T)


def sliced_wasserstein_sq(X, Y, proj: ProjectionSet, normalize_by_m: bool = False) -> float:
    X, Y = _check(X, Y, proj)
    d = _diffs(X, Y, proj)
    value = float(np.sum(d * d)) / proj.n_projections
    return value / X.shape[0] if normalize_by_m else value


def sliced_wasserstein_grad_X(X, Y, proj: ProjectionSet, normalize_by_m: bool = False) -> np.ndarray:
    """Gradient of :func:`sliced_wasserstein_sq` with respect to ``X``.

    The sort matching is held fixed, so this is exact away from ties.
    """
    return sliced_wasserstein_sq_and_grad(X, Y, proj, normalize_by_m)[1]


def sliced_wasserstein_sq_and_grad(X, Y, proj: ProjectionSet, normalize_by_m: bool = False):
    X, Y = _check(X, Y, proj)
    d = _diffs(X, Y, proj)
    n_proj = proj.n_projections
    value = float(np.sum(d * d)) / n_proj
    grad = (2.0 / n_proj) * (d.T @ proj.directions)
    if normalize_by_m:
        m = X.shape[0]
        return value / m, grad / m
    return value, grad


def exact_wasserstein_sq_small(X, Y) -> float:
    """Exact squared 2-Wasserstein distance between two uniform n-point measures.

    Brute force over all ``n!`` matchings, so only for ``n <= 8``. Intended as
    a test oracle.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X, Y = X[:, None], Y.reshape(-1, 1)
    if X.shape != Y.shape:
        raise ValidationError(f"shapes differ: {X.shape} vs {Y.shape}")
    n = X.shape[0]
    if n > EXACT_MAX_N:
        raise ValidationError(f"exact oracle refuses n={n} > {EXACT_MAX_N}")
    if n == 0:
        raise ValidationError("empty sample sets")
    cost = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)
    return kernels.min_assignment_cost(np.ascontiguousarray(cost)) / n


def subsample_to_match(X, Y, seed=None):
    """Uniformly subsample the larger of ``X``/``Y`` (without replacement) to the smaller size."""
    rng = np.random.default_rng(seed)
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[0] > Y.shape[0]:
        X = X[np.sort(rng.choice(X.shape[0], Y.shape[0], replace=False))]
    elif Y.shape[0] > X.shape[0]:
        Y = Y[np.sort(rng.choice(Y.shape[0], X.shape[0], replace=False))]
    return X, Y
