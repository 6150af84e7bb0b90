"""Mean-of-features replay memory.

After each task, the samples whose embeddings lie closest to their class
mean (squared Euclidean distance) are stored with the label assigned at
selection time. The buffer only ever grows; entries are never relabelled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ShapeError, ValidationError


@dataclass(frozen=True)
class BufferEntry:
    input: np.ndarray
    pseudo_label: int
    source_task: int
    distance_to_mean: float


def class_budgets(n_b: int, k: int, candidates=None) -> np.ndarray:
    """Split a per-task budget ``n_b`` into per-class budgets.

    Each class gets ``n_b // k``; the remainder goes one apiece to the classes
    with the most candidates (ties to the lower class id).
    """
    if n_b < 0 or k < 1:
        raise ValidationError("need n_b >= 0 and k >= 1")
    budgets = np.full(k, n_b // k, dtype=np.int64)
    rem = n_b - budgets.sum()
    if rem:
        counts = np.zeros(k, dtype=np.int64) if candidates is None else np.asarray(candidates)
        order = np.lexsort((np.arange(k), -counts))
        budgets[order[:rem]] += 1
    return budgets


def select_mof(inputs, embeddings, pseudo_labels, means, budget, source_task: int = 0) -> list[BufferEntry]:
    """Per class, keep the ``budget`` points nearest to that class's mean.

    ``budget`` is an int applied to every class or a length-``k`` sequence.
    Ties are broken by original row index. Entries come back grouped by
    class, nearest first.
    """
    x = np.asarray(inputs, dtype=np.float64)
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(pseudo_labels)
    means = np.asarray(means, dtype=np.float64)
    n = x.shape[0]
    if z.shape[0] != n or y.shape != (n,):
        raise ShapeError("inputs, embeddings and labels must have the same row count")
    k = means.shape[0]
    if means.ndim != 2 or (n and z.shape[1] != means.shape[1]):
        raise ShapeError("means width does not match embeddings")
    budgets = np.broadcast_to(np.asarray(budget, dtype=np.int64), (k,)) if np.ndim(budget) == 0 else np.asarray(budget, dtype=np.int64)
    if budgets.shape != (k,):
        raise ValidationError(f"budget must have one entry per class (k={k})")
    if n and (y.min() < 0 or y.max() >= k):
        raise ValidationError(f"labels outside [0, {k})")
    out = []
    for j in range(k):
        idx = np.flatnonzero(y == j)
        if budgets[j] <= 0 or idx.size == 0:
            continue
        diff = z[idx] - means[j]
        dist = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((idx, dist))[: budgets[j]]
        for o in order:
            row = x[idx[o]].copy()
            row.setflags(write=False)
            out.append(BufferEntry(row, j, source_task, float(dist[o])))
    return out


@dataclass(frozen=True)
class ReplayBuffer:
    n_b: int
    k: int
    entries: tuple[BufferEntry, ...] = field(default_factory=tuple)

    @property
    def per_class_budget(self) -> int:
        return self.n_b // self.k

    def __len__(self) -> int:
        return len(self.entries)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(inputs, labels, source_tasks)`` stacked; inputs are copies."""
        if not self.entries:
            return np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        xs = np.stack([e.input for e in self.entries])
        ys = np.array([e.pseudo_label for e in self.entries], dtype=np.int64)
        ts = np.array([e.source_task for e in self.entries], dtype=np.int64)
        return xs, ys, ts

    def check_budgets(self) -> None:
        cap = -(-self.n_b // self.k)
        tasks = {}
        for e in self.entries:
            if not 0 <= e.pseudo_label < self.k:
                raise ValidationError(f"buffer label {e.pseudo_label} outside [0, {self.k})")
            tasks.setdefault(e.source_task, []).append(e.pseudo_label)
        for t, labels in tasks.items():
            counts = np.bincount(labels, minlength=self.k)
            if len(labels) > self.n_b or counts.max() > cap:
                raise ValidationError(f"task {t} exceeds buffer budget (n_b={self.n_b}, counts={counts.tolist()})")


def append(buffer: ReplayBuffer, new_entries: Sequence[BufferEntry], task_id: int) -> ReplayBuffer:
    """Return the union of ``buffer`` and ``new_entries`` (all from ``task_id``)."""
    for e in new_entries:
        if e.source_task != task_id:
            raise ValidationError(f"entry from task {e.source_task} appended as task {task_id}")
    if any(e.source_task == task_id for e in buffer.entries):
        raise ValidationError(f"task {task_id} already stored in the buffer")
    out = ReplayBuffer(buffer.n_b, buffer.k, tuple(buffer.entries) + tuple(new_entries))
    out.check_budgets()
    return out


def sample_batch(buffer: ReplayBuffer, m: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Uniform minibatch: without replacement if ``m <= len(buffer)``, else with replacement."""
    if not buffer.entries:
        raise ValidationError("cannot sample from an empty buffer")
    rng = np.random.default_rng(seed)
    size = len(buffer)
    idx = rng.choice(size, size=m, replace=m > size)
    xs, ys, _ = buffer.arrays()
    return xs[idx], ys[idx]
