"""Oracle and property checks, runnable from the command line (``ldaucid check``).

Each check compares a library routine against an independent computation
(brute force, direct formulas, finite differences) and returns a
:class:`CheckResult`.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import kernels
from .buffer import select_mof
from .gmm import fit_map, ridge
from .nn import forward, init_model
from .swd import (
    exact_wasserstein_sq_small,
    sample_projections,
    sliced_wasserstein_sq,
    wasserstein1d_sq,
)
from .trainer import adaptation_loss


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        name, passed, detail = fn(*args, **kwargs)
        return CheckResult(name, passed, detail, time.perf_counter() - t0)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _perm_w2(x, y):
    # pure-python permutation minimum, independent of the kernels module
    n = len(x)
    best = np.inf
    for perm in permutations(range(n)):
        best = min(best, sum(float(np.sum((x[i] - y[perm[i]]) ** 2)) for i in range(n)))
    return best / n


@_timed
def check_1d_oracle(n_instances=200, tol=1e-9, seed=0):
    """Sorted 1-D matching equals the exact permutation optimum."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(1, 9))
        a, b = rng.normal(size=n), rng.normal(size=n) * 2 + 0.5
        err = abs(wasserstein1d_sq(a, b) / n - exact_wasserstein_sq_small(a, b))
        worst = max(worst, err)
    return "1d sorted matching == exact W2^2", worst < tol, f"max |diff| = {worst:.2e} over {n_instances} instances (tol {tol:g})"


@_timed
def check_sliced_le_exact(n_trials=1000, n_projections=64, min_fraction=0.95, seed=1):
    """sqrt(SW2 / M) <= W2 + 3/sqrt(L) on random 2-D point sets."""
    rng = np.random.default_rng(seed)
    slack = 3.0 / np.sqrt(n_projections)
    ok = 0
    for _ in range(n_trials):
        n = int(rng.integers(1, 7))
        X = rng.normal(size=(n, 2))
        Y = rng.normal(size=(n, 2)) * rng.uniform(0.5, 2.0) + rng.normal(size=2)
        proj = sample_projections(2, n_projections, rng)
        sw = np.sqrt(sliced_wasserstein_sq(X, Y, proj, normalize_by_m=True))
        w = np.sqrt(exact_wasserstein_sq_small(X, Y))
        ok += sw <= w + slack
    frac = ok / n_trials
    return "sliced <= exact Wasserstein", frac >= min_fraction, f"{ok}/{n_trials} trials satisfied (need {min_fraction:.0%})"


def _kink_signature(model, batches, gmm_samples, proj):
    """Activation masks and sort orders that the loss is piecewise smooth in."""
    sig = []
    for x in batches:
        emb, _, cache = forward(model, x)
        sig.extend((pre > 0).tobytes() for pre in cache.pre)
        sig.append(np.argsort(proj.directions @ emb.T, axis=1, kind="stable").tobytes())
    sig.append(np.argsort(proj.directions @ gmm_samples.T, axis=1, kind="stable").tobytes())
    return sig


def _pseudo_signature(model, z):
    from .nn import classifier_forward

    _, cache = classifier_forward(model, z)
    return [(pre > 0).tobytes() for pre in cache.pre]


@_timed
def check_gradient(n_probes=100, h=1e-5, tol=1e-4, seed=2):
    """Directional derivative of the four-term loss vs central differences on a 2-16-8-2 net.

    Probes whose +-h perturbation would cross a ReLU kink or change a sort
    order are redrawn; the loss is not differentiable across those.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    redrawn = 0
    done = 0
    while done < n_probes:
        model = init_model(2, (16, 8), 2, seed=rng)
        # perturb biases so they are not all zero
        model = model.from_flat(model.flat() + 0.1 * rng.normal(size=model.flat().size))
        m = 12
        xt = rng.normal(size=(m, 2))
        zp = rng.normal(size=(m, 8))
        yp = rng.integers(0, 2, m)
        xb = rng.normal(size=(m, 2))
        yb = rng.integers(0, 2, m)
        zg = rng.normal(size=(m, 8))
        proj = sample_projections(8, 16, rng)
        lam = float(rng.uniform(0.1, 2.0))
        norm = bool(rng.integers(0, 2))

        def f(mod):
            return adaptation_loss(mod, xt, (zp, yp), (xb, yb), zg, proj, lam, norm)[0]

        _, _, g = adaptation_loss(model, xt, (zp, yp), (xb, yb), zg, proj, lam, norm)
        theta = model.flat()
        for _ in range(5):
            v = rng.normal(size=theta.size)
            v /= np.linalg.norm(v)
            plus, minus = model.from_flat(theta + h * v), model.from_flat(theta - h * v)
            sigs = [_kink_signature(mm, (xt, xb), zg, proj) + _pseudo_signature(mm, zp) for mm in (model, plus, minus)]
            if not (sigs[0] == sigs[1] == sigs[2]):
                redrawn += 1
                continue
            numeric = (f(plus) - f(minus)) / (2 * h)
            analytic = float(g.flat() @ v)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
            worst = max(worst, rel)
            done += 1
            if done == n_probes:
                break
    return "loss gradient vs finite differences", worst < tol, f"max rel err {worst:.2e} over {n_probes} probes, {redrawn} kink-crossing probes redrawn (tol {tol:g})"


def direct_map_estimate(z, y, k, reg_epsilon, reg_floor):
    """Per-class weights, means and covariances written out point by point."""
    n, p = len(z), len(z[0])
    weights, means, covs = [], [], []
    for j in range(k):
        members = [z[i] for i in range(n) if y[i] == j]
        cnt = len(members)
        weights.append(cnt / n)
        mu = [sum(v[c] for v in members) / cnt for c in range(p)]
        cov = [[0.0] * p for _ in range(p)]
        for v in members:
            for a in range(p):
                for b in range(p):
                    cov[a][b] += (v[a] - mu[a]) * (v[b] - mu[b]) / cnt
        trace = sum(cov[a][a] for a in range(p))
        reg = max(reg_epsilon * trace / p, reg_floor)
        for a in range(p):
            cov[a][a] += reg
        means.append(mu)
        covs.append(cov)
    return np.array(weights), np.array(means), np.array(covs)


@_timed
def check_gmm_map(n_sets=50, tol=1e-12, seed=3):
    """fit_map against a point-by-point implementation of the closed-form estimates."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_sets):
        k = int(rng.integers(1, 5))
        p = int(rng.integers(1, 5))
        n = int(rng.integers(k, 40))
        y = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
        z = rng.normal(size=(n, p)) + y[:, None]
        g = fit_map(z, y, k, 1e-4, 1e-6)
        w, mu, cov = direct_map_estimate(z.tolist(), y.tolist(), k, 1e-4, 1e-6)
        worst = max(worst, np.abs(g.weights - w).max(), np.abs(g.means - mu).max(), np.abs(g.covariances - cov).max())
    return "GMM closed-form estimates", worst < tol, f"max |diff| = {worst:.2e} over {n_sets} sets (tol {tol:g})"


def exhaustive_mof(inputs, embeddings, labels, means, budget):
    """Fully sort every class by (distance, index) and take the first ``budget``."""
    chosen = []
    for j in range(len(means)):
        scored = []
        for i in range(len(labels)):
            if labels[i] == j:
                d = sum((embeddings[i][c] - means[j][c]) ** 2 for c in range(len(means[j])))
                scored.append((d, i))
        scored.sort()
        chosen.extend(i for _, i in scored[:budget])
    return chosen


@_timed
def check_mof(n_instances=100, seed=4):
    """Mean-of-features selection against an exhaustive sort."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_instances):
        n = int(rng.integers(1, 101))
        k = int(rng.integers(1, 5))
        p = int(rng.integers(1, 4))
        x = rng.normal(size=(n, 3))
        # coarse grid values make distance ties common
        z = rng.integers(-3, 4, size=(n, p)).astype(float)
        y = rng.integers(0, k, n)
        means = rng.integers(-1, 2, size=(k, p)).astype(float)
        budget = int(rng.integers(0, 12))
        got = select_mof(x, z, y, means, budget)
        expect = exhaustive_mof(x.tolist(), z.tolist(), y.tolist(), means.tolist(), budget)
        got_rows = [int(np.flatnonzero((x == e.input).all(axis=1))[0]) for e in got]
        mismatches += got_rows != expect
    return "mean-of-features selection", mismatches == 0, f"{n_instances - mismatches}/{n_instances} instances identical"


@_timed
def check_backends(seed=5):
    """numba and numpy kernels agree."""
    rng = np.random.default_rng(seed)
    px, py = rng.normal(size=(32, 50)), rng.normal(size=(32, 50))
    px[:, :5] = 0.0
    d_np = kernels.match_diffs_np(px, py)
    d_nb = kernels.match_diffs_nb(px, py)
    c = rng.random((7, 7))
    a, b = kernels.min_assignment_cost_np(c), kernels.min_assignment_cost_nb(c)
    ok = np.array_equal(d_np, d_nb) and abs(a - b) < 1e-12
    return "numba/numpy kernel agreement", ok, f"match residuals identical: {np.array_equal(d_np, d_nb)}, assignment diff {abs(a - b):.1e}"


ALL_CHECKS = (check_1d_oracle, check_sliced_le_exact, check_gradient, check_gmm_map, check_mof, check_backends)


def run_all(echo=print) -> bool:
    ok = True
    for check in ALL_CHECKS:
        res = check()
        echo(res.line())
        ok &= res.passed
    return ok
