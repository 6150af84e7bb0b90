"""Continual adaptation loop.

Source phase: cross-entropy training on the labelled source domain, then a
per-class Gaussian mixture fit on the source embeddings and the initial
replay buffer. Each later time step adapts to one unlabelled target domain
by minimising

    CE(h(z_p), y_p) + CE(f(x_b), y_b)
      + lam * SW2(phi(x_t), z_gmm) + lam * SW2(phi(x_b), z_gmm)

over minibatches, where ``z_p, y_p`` are confident pseudo-samples drawn from
the mixture, ``x_b, y_b`` come from the replay buffer and ``z_gmm`` are fresh
mixture samples. The mixture is refit and the buffer extended once per time
step, after the optimisation loop.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import buffer as rb
from . import gmm as gm
from .data import Domain
from .exceptions import ValidationError
from .nn import (
    ModelParams,
    adam_init,
    adam_step,
    backward,
    classifier_forward,
    cross_entropy,
    forward,
)
from .swd import ProjectionSet, sample_projections, sliced_wasserstein_sq, sliced_wasserstein_sq_and_grad

log = logging.getLogger(__name__)

# SeedSequence stream ids, one per consumer of randomness
_SRC, _PSEUDO, _ADAPT, _DIAG = 1, 2, 3, 4


@dataclass
class HyperParams:
    lambda_: float = 1.0
    tau: float = 0.9
    n_b: int = 10
    n_p: int | None = None
    l_projections: int = 64
    epochs_source: int = 100
    epochs_adapt: int = 30
    batch_size: int = 64
    learning_rate: float = 5e-3
    learning_rate_adapt: float | None = 1e-3
    normalize_swd: bool = False
    reg_epsilon: float = gm.DEFAULT_REG
    seed: int = 0

    def validate(self) -> None:
        if self.lambda_ < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lambda_}")
        if not 0.0 <= self.tau < 1.0:
            raise ValidationError(f"tau must lie in [0, 1), got {self.tau}")
        if self.n_b < 0:
            raise ValidationError("n_b must be >= 0")
        for name in ("l_projections", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.n_p is not None and self.n_p < 1:
            raise ValidationError("n_p must be >= 1")
        if self.epochs_source < 0 or self.epochs_adapt < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.learning_rate <= 0 or (self.learning_rate_adapt is not None and self.learning_rate_adapt <= 0):
            raise ValidationError("learning rates must be > 0")


@dataclass
class StepDiagnostics:
    time_step: int
    swd_current: float
    swd_gmm_drift: float
    pseudo_size: int
    pseudo_acceptance: float


@dataclass
class TrainerState:
    model: ModelParams
    gmm: gm.GmmState | None = None
    buffer: rb.ReplayBuffer | None = None
    time_step: int = 0
    history: list = field(default_factory=list)
    diagnostics: list[StepDiagnostics] = field(default_factory=list)


class LossComponents(NamedTuple):
    ce_pseudo: float
    ce_buffer: float
    swd_target: float
    swd_buffer: float


@dataclass
class EpochReport:
    """Passed to ``on_epoch`` callbacks after every training epoch."""

    time_step: int
    epoch: int
    model: ModelParams
    loss_total: float
    components: LossComponents
    swd_current: float


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *path]))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def evaluate(model: ModelParams, domain: Domain) -> float:
    """Fraction of argmax-correct predictions on a labelled domain."""
    if domain.labels is None:
        raise ValidationError(f"domain {domain.name} has no labels to evaluate against")
    if len(domain) == 0:
        raise ValidationError(f"domain {domain.name} is empty")
    logits = forward(model, domain.inputs)[1]
    return float(np.mean(logits.argmax(axis=1) == domain.labels))


def embed(model: ModelParams, x) -> np.ndarray:
    return forward(model, x)[0]


def train_source(state: TrainerState, source: Domain, hyper: HyperParams, on_epoch: Callable[[EpochReport], None] | None = None) -> TrainerState:
    """Supervised training on the source, then mixture fit and buffer initialisation."""
    if state.time_step != 0:
        raise ValidationError("source training must happen at time step 0")
    if source.labels is None:
        raise ValidationError("source domain must be labelled")
    hyper.validate()
    model = state.model
    k = model.n_classes
    counts = np.bincount(source.labels, minlength=k)
    if counts.shape[0] > k:
        raise ValidationError(f"source labels exceed k={k}")
    if np.any(counts == 0):
        raise ValidationError(f"classes {np.flatnonzero(counts == 0).tolist()} absent from the source data")

    rng = _rng(hyper.seed, 0, _SRC)
    opt = adam_init(model, hyper.learning_rate)
    zero = LossComponents(0.0, 0.0, 0.0, 0.0)
    for epoch in range(hyper.epochs_source):
        losses = []
        for idx in _batches(len(source), hyper.batch_size, rng):
            _, logits, cache = forward(model, source.inputs[idx])
            loss, dlogits = cross_entropy(logits, source.labels[idx])
            model, opt = adam_step(model, backward(model, cache, dlogits), opt)
            losses.append(loss)
        if on_epoch is not None:
            on_epoch(EpochReport(0, epoch, model, float(np.mean(losses)), zero, 0.0))

    emb = embed(model, source.inputs)
    gmm = gm.fit_map(emb, source.labels, k, hyper.reg_epsilon)
    buf = rb.ReplayBuffer(hyper.n_b, k)
    budgets = rb.class_budgets(hyper.n_b, k, counts)
    buf = rb.append(buf, rb.select_mof(source.inputs, emb, source.labels, gmm.means, budgets, 0), 0)
    return TrainerState(model, gmm, buf, 1, list(state.history), list(state.diagnostics))


def adaptation_loss(
    model: ModelParams,
    target_batch,
    pseudo_batch,
    buffer_batch,
    gmm_samples,
    proj: ProjectionSet,
    lambda_: float,
    normalize_by_m: bool = False,
) -> tuple[float, LossComponents, ModelParams]:
    """Four-term objective for one minibatch and its parameter gradient.

    ``pseudo_batch`` is ``(Z, labels)`` fed straight to the classifier head;
    ``buffer_batch`` is ``(X, labels)`` or None when the buffer is empty.
    ``gmm_samples`` must have as many rows as ``target_batch`` (and as the
    buffer batch). The SWD components are reported already scaled by
    ``lambda_``; with ``lambda_ == 0`` they are zero and not differentiated.
    """
    z_p, y_p = pseudo_batch
    logits_p, cache_p = classifier_forward(model, z_p)
    ce_p, d_p = cross_entropy(logits_p, np.asarray(y_p))
    grads = backward(model, cache_p, d_p, None)

    sw_t = 0.0
    if lambda_ > 0:
        emb_t, _, cache_t = forward(model, target_batch)
        sw_t, g_t = sliced_wasserstein_sq_and_grad(emb_t, gmm_samples, proj, normalize_by_m)
        grads = grads + backward(model, cache_t, None, lambda_ * g_t)

    ce_b = sw_b = 0.0
    if buffer_batch is not None:
        x_b, y_b = buffer_batch
        emb_b, logits_b, cache_b = forward(model, x_b)
        ce_b, d_b = cross_entropy(logits_b, np.asarray(y_b))
        g_b = None
        if lambda_ > 0:
            sw_b, g_b = sliced_wasserstein_sq_and_grad(emb_b, gmm_samples, proj, normalize_by_m)
            g_b = lambda_ * g_b
        grads = grads + backward(model, cache_b, d_b, g_b)

    comps = LossComponents(ce_p, ce_b, lambda_ * sw_t, lambda_ * sw_b)
    return float(sum(comps)), comps, grads


def _diag_samples(gmm: gm.GmmState, n: int, seed: int) -> np.ndarray:
    return gm.sample(gmm, n, _rng(seed, _DIAG))[0]


def bound_diagnostics(state: TrainerState, target: Domain, previous_gmm_samples=None, seed: int = 0, n_projections: int = 64) -> tuple[float, float]:
    """Measurable distribution-shift terms after a time step.

    ``swd_current``: sliced distance between the target embeddings and
    mixture samples. ``swd_gmm_drift``: sliced distance between
    ``previous_gmm_samples`` and samples of the current mixture drawn with the
    same seed (0 if there is no previous set). Both are per-point (divided by
    the sample count) squared distances.
    """
    emb = embed(state.model, target.inputs)
    proj = sample_projections(state.model.embedding_dim, n_projections, _rng(seed, _DIAG, 1))
    fresh = _diag_samples(state.gmm, emb.shape[0], seed)
    current = sliced_wasserstein_sq(emb, fresh, proj, normalize_by_m=True)
    drift = 0.0
    if previous_gmm_samples is not None:
        prev = np.asarray(previous_gmm_samples)
        now = _diag_samples(state.gmm, prev.shape[0], seed)
        drift = sliced_wasserstein_sq(now, prev, proj, normalize_by_m=True)
    return current, drift


def run_time_step(state: TrainerState, target: Domain, hyper: HyperParams, on_epoch: Callable[[EpochReport], None] | None = None) -> TrainerState:
    """Adapt to one unlabelled target domain; returns the next state."""
    if state.gmm is None or state.buffer is None or state.time_step < 1:
        raise ValidationError("run train_source before adapting to targets")
    hyper.validate()
    t = state.time_step
    model, gmm, buf = state.model, state.gmm, state.buffer
    k, p = model.n_classes, model.embedding_dim
    x_t = target.inputs
    n_p = hyper.n_p or len(target)

    pseudo = gm.draw_pseudo_dataset(gmm, model, n_p, hyper.tau, seed=_rng(hyper.seed, t, _PSEUDO))
    log.info("time step %d: pseudo-set %d/%d (acceptance %.3f)", t, len(pseudo), n_p, pseudo.acceptance_rate)
    if len(pseudo) < n_p:
        log.warning("pseudo-set smaller than requested: %d < %d", len(pseudo), n_p)

    use_buffer = len(buf) > 0
    if use_buffer:
        buf_x, buf_y, _ = buf.arrays()
    rng = _rng(hyper.seed, t, _ADAPT)
    opt = adam_init(model, hyper.learning_rate_adapt or hyper.learning_rate)
    for epoch in range(hyper.epochs_adapt):
        sums = np.zeros(4)
        diag = []
        n_batches = 0
        for idx in _batches(len(target), hyper.batch_size, rng):
            m = idx.size
            pi = rng.choice(len(pseudo), size=m, replace=m > len(pseudo))
            bb = None
            if use_buffer:
                bi = rng.choice(len(buf_y), size=m, replace=m > len(buf_y))
                bb = (buf_x[bi], buf_y[bi])
            z_gmm, _ = gm.sample(gmm, m, rng)
            proj = sample_projections(p, hyper.l_projections, rng)
            xb = x_t[idx]
            _, comps, grads = adaptation_loss(model, xb, (pseudo.Z[pi], pseudo.labels[pi]), bb, z_gmm, proj, hyper.lambda_, hyper.normalize_swd)
            diag.append(sliced_wasserstein_sq(embed(model, xb), z_gmm, proj, normalize_by_m=True))
            model, opt = adam_step(model, grads, opt)
            sums += comps
            n_batches += 1
        if on_epoch is not None and n_batches:
            comps = LossComponents(*(sums / n_batches))
            on_epoch(EpochReport(t, epoch, model, float(sum(comps)), comps, float(np.mean(diag))))

    # refit the mixture on the adapted target embeddings plus the buffer
    emb_t = embed(model, x_t)
    y_t = forward(model, x_t)[1].argmax(axis=1)
    if use_buffer:
        fit_z = np.vstack([emb_t, embed(model, buf_x)])
        fit_y = np.concatenate([y_t, buf_y])
    else:
        fit_z, fit_y = emb_t, y_t
    prev_samples = _diag_samples(gmm, len(target), hyper.seed)
    new_gmm = gm.fit_map(fit_z, fit_y, k, hyper.reg_epsilon, fallback=gmm)

    budgets = rb.class_budgets(hyper.n_b, k, np.bincount(y_t, minlength=k))
    new_buf = rb.append(buf, rb.select_mof(x_t, emb_t, y_t, new_gmm.means, budgets, t), t)

    nxt = TrainerState(model, new_gmm, new_buf, t + 1, list(state.history), list(state.diagnostics))
    cur, drift = bound_diagnostics(nxt, target, prev_samples, hyper.seed, hyper.l_projections)
    nxt.diagnostics.append(StepDiagnostics(t, cur, drift, len(pseudo), pseudo.acceptance_rate))
    return nxt
