"""Class-conditional Gaussian mixture over the embedding space.

One component per class. Parameters come from closed-form per-class
estimates on labelled embeddings (no EM): the weight is the class frequency,
the mean the class average, the covariance the class-averaged outer product
of centred embeddings plus a ridge ``max(reg_epsilon * trace / p, reg_floor)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import PseudoSetEmptyError, ShapeError, ValidationError
from .nn import ModelParams, classify_from_embedding, softmax

DEFAULT_REG = 1e-4
REG_FLOOR = 1e-6
ATTEMPTS_FACTOR = 20


@dataclass
class GmmState:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    reg_epsilon: float = DEFAULT_REG

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        """Raise ValidationError unless weights are a distribution and covariances are SPD."""
        w = self.weights
        if w.ndim != 1 or self.means.shape[0] != w.shape[0] or self.covariances.shape != (w.shape[0], self.dim, self.dim):
            raise ShapeError("inconsistent GMM parameter shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"mixture weights must be a probability vector, got {w}")
        if not np.allclose(self.covariances, np.swapaxes(self.covariances, 1, 2), rtol=0, atol=1e-12):
            raise ValidationError("covariances must be symmetric")
        self.cholesky()

    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("covariance is not positive definite; regularization missing") from exc

    def copy(self) -> "GmmState":
        return GmmState(self.weights.copy(), self.means.copy(), self.covariances.copy(), self.reg_epsilon)


def ridge(cov: np.ndarray, reg_epsilon: float = DEFAULT_REG, reg_floor: float = REG_FLOOR) -> float:
    return max(reg_epsilon * float(np.trace(cov)) / cov.shape[0], reg_floor)


def fit_map(
    embeddings,
    labels,
    k: int,
    reg_epsilon: float = DEFAULT_REG,
    reg_floor: float = REG_FLOOR,
    fallback: GmmState | None = None,
) -> GmmState:
    """Closed-form per-class estimates of the mixture.

    A class with no members keeps the component (weight, mean, covariance) of
    ``fallback``; the weights of the populated classes are then scaled to
    fill the remaining mass. Without a fallback an empty class is an error.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValidationError("fit_map needs a non-empty (n, p) embedding matrix")
    if y.shape != (z.shape[0],):
        raise ShapeError(f"labels shape {y.shape} != ({z.shape[0]},)")
    if y.dtype.kind not in "iu" or y.min() < 0 or y.max() >= k:
        raise ValidationError(f"labels must be integers in [0, {k})")
    n, p = z.shape
    if fallback is not None and (fallback.k != k or fallback.dim != p):
        raise ShapeError("fallback GMM has the wrong shape")

    counts = np.bincount(y, minlength=k)
    weights = counts / n
    means = np.zeros((k, p))
    covs = np.zeros((k, p, p))
    empty = counts == 0
    for j in range(k):
        if empty[j]:
            if fallback is None:
                raise ValidationError(f"class {j} has no members and no fallback component")
            means[j] = fallback.means[j]
            covs[j] = fallback.covariances[j]
            continue
        zj = z[y == j]
        mu = zj.mean(axis=0)
        c = zj - mu
        cov = (c.T @ c) / zj.shape[0]
        cov = 0.5 * (cov + cov.T)
        cov[np.diag_indices(p)] += ridge(cov, reg_epsilon, reg_floor)
        means[j] = mu
        covs[j] = cov
    if empty.any():
        kept = fallback.weights[empty].sum()
        weights = weights * (1.0 - kept)
        weights[empty] = fallback.weights[empty]
        weights = weights / weights.sum()
    return GmmState(weights, means, covs, reg_epsilon)


def sample(gmm: GmmState, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` points; returns ``(Z, component_ids)``."""
    rng = np.random.default_rng(seed)
    chol = gmm.cholesky()
    ids = rng.choice(gmm.k, size=n, p=gmm.weights)
    eps = rng.standard_normal((n, gmm.dim))
    z = gmm.means[ids] + np.einsum("nij,nj->ni", chol[ids], eps)
    return z, ids


def log_density(gmm: GmmState, z) -> np.ndarray | float:
    """``log sum_j w_j N(z | mu_j, Sigma_j)`` via log-sum-exp. Accepts one point or a batch."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zb = z[None, :] if single else z
    if zb.shape[1] != gmm.dim:
        raise ShapeError(f"point width {zb.shape[1]} != {gmm.dim}")
    chol = gmm.cholesky()
    p = gmm.dim
    comps = np.empty((zb.shape[0], gmm.k))
    for j in range(gmm.k):
        diff = (zb - gmm.means[j]).T
        sol = np.linalg.solve(chol[j], diff)
        maha = np.sum(sol * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol[j])))
        with np.errstate(divide="ignore"):
            comps[:, j] = np.log(gmm.weights[j]) - 0.5 * (p * np.log(2 * np.pi) + logdet + maha)
    top = comps.max(axis=1, keepdims=True)
    out = top[:, 0] + np.log(np.exp(comps - top).sum(axis=1))
    return float(out[0]) if single else out


@dataclass
class PseudoDataset:
    Z: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    attempts: int = 0
    requested: int = 0

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return len(self) / self.attempts if self.attempts else 0.0


def draw_pseudo_dataset(
    gmm: GmmState,
    model: ModelParams,
    n_target: int,
    tau: float,
    max_attempts: int | None = None,
    seed=None,
) -> PseudoDataset:
    """Sample the mixture and keep points the classifier head labels with confidence above ``tau``.

    Draws proceed in chunks of ``n_target`` until ``n_target`` points are
    accepted or ``max_attempts`` (default ``20 * n_target``) draws were made.
    The result may hold fewer than ``n_target`` points.
    """
    if not 0.0 <= tau < 1.0:
        raise ValidationError(f"tau must lie in [0, 1), got {tau}")
    if n_target < 1:
        raise ValidationError("n_target must be >= 1")
    if gmm.k != model.n_classes or gmm.dim != model.embedding_dim:
        raise ShapeError("GMM does not match the model's embedding/class dimensions")
    max_attempts = ATTEMPTS_FACTOR * n_target if max_attempts is None else max_attempts
    rng = np.random.default_rng(seed)
    zs, ys, cs = [], [], []
    accepted = attempts = 0
    while accepted < n_target and attempts < max_attempts:
        m = min(n_target, max_attempts - attempts)
        z, _ = sample(gmm, m, rng)
        attempts += m
        prob = softmax(classify_from_embedding(model, z))
        conf = prob.max(axis=1)
        keep = np.flatnonzero(conf > tau)[: n_target - accepted]
        zs.append(z[keep])
        ys.append(prob[keep].argmax(axis=1))
        cs.append(conf[keep])
        accepted += keep.size
    if accepted == 0:
        raise PseudoSetEmptyError(
            f"pseudo-set empty: no sample exceeded confidence tau={tau} in {attempts} draws"
        )
    return PseudoDataset(np.concatenate(zs), np.concatenate(ys).astype(np.int64), np.concatenate(cs), attempts, n_target)
