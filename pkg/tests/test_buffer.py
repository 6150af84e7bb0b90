import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldaucid.buffer import BufferEntry, ReplayBuffer, append, class_budgets, sample_batch, select_mof
from ldaucid.exceptions import ValidationError


def _brute(z, y, means, m_b):
    """Full sort of (distance, index) per class."""
    out = []
    for j in range(means.shape[0]):
        cands = sorted((float(np.sum((z[i] - means[j]) ** 2)), i) for i in range(len(y)) if y[i] == j)
        out.extend((j, i) for _, i in cands[:m_b])
    return out


def test_argmin_example():
    z = np.array([[2.0], [1.0], [3.0]])
    sel = select_mof(np.arange(3.0)[:, None], z, np.zeros(3, dtype=int), np.zeros((1, 1)), 1)
    assert len(sel) == 1 and sel[0].input[0] == 1.0 and sel[0].distance_to_mean == 1.0


def test_budget_exceeding_n_selects_all(rng):
    z = rng.normal(size=(6, 2))
    y = np.array([0, 1, 0, 1, 1, 0])
    sel = select_mof(z, z, y, np.zeros((2, 2)), 100)
    assert len(sel) == 6


def test_zero_budget_is_empty(rng):
    z = rng.normal(size=(5, 2))
    assert select_mof(z, z, np.zeros(5, dtype=int), np.zeros((1, 2)), 0) == []


def test_ties_break_by_index():
    z = np.array([[1.0], [-1.0], [1.0]])
    sel = select_mof(np.array([[10.0], [11.0], [12.0]]), z, np.zeros(3, dtype=int), np.zeros((1, 1)), 2)
    assert [e.input[0] for e in sel] == [10.0, 11.0]


def test_bad_labels_rejected(rng):
    z = rng.normal(size=(3, 2))
    with pytest.raises(ValidationError):
        select_mof(z, z, np.array([0, 1, 2]), np.zeros((2, 2)), 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 100), st.integers(1, 4), st.integers(0, 12), st.integers(0, 2**31 - 1))
def test_matches_full_sort_oracle(n, k, m_b, seed):
    r = np.random.default_rng(seed)
    z = np.round(r.normal(size=(n, 2)), 1)  # rounding forces distance ties
    y = r.integers(0, k, n)
    means = r.normal(size=(k, 2))
    x = np.arange(n, dtype=float)[:, None]
    got = [(e.pseudo_label, int(e.input[0])) for e in select_mof(x, z, y, means, m_b)]
    assert got == _brute(z, y, means, m_b)


def test_selected_never_farther_than_unselected(rng):
    z = rng.normal(size=(80, 3))
    y = rng.integers(0, 3, 80)
    means = rng.normal(size=(3, 3))
    x = np.arange(80.0)[:, None]
    sel = select_mof(x, z, y, means, 4)
    chosen = {int(e.input[0]) for e in sel}
    for j in range(3):
        d = np.sum((z - means[j]) ** 2, axis=1)
        inside = [d[i] for i in chosen if y[i] == j]
        outside = [d[i] for i in range(80) if y[i] == j and i not in chosen]
        if inside and outside:
            assert max(inside) <= min(outside)


def test_class_budgets_remainder():
    assert class_budgets(10, 2).tolist() == [5, 5]
    assert class_budgets(10, 3, candidates=[5, 9, 2]).tolist() == [3, 4, 3]
    assert class_budgets(11, 3, candidates=[4, 4, 1]).tolist() == [4, 4, 3]
    assert class_budgets(0, 4).tolist() == [0, 0, 0, 0]


def _entries(task, labels):
    return [BufferEntry(np.array([float(i)]), int(c), task, 0.0) for i, c in enumerate(labels)]


def test_append_semantics():
    empty = ReplayBuffer(4, 2)
    new = _entries(0, [0, 0, 1, 1])
    b1 = append(empty, new, 0)
    assert list(b1.entries) == new
    b2 = append(b1, _entries(1, [0, 1]), 1)
    assert len(b2) == 6
    assert b2.entries[:4] == b1.entries
    assert len(empty) == 0  # inputs untouched
    with pytest.raises(ValidationError):
        append(b2, _entries(1, [0]), 1)
    with pytest.raises(ValidationError):
        append(b2, _entries(2, [0, 0, 0]), 2)
    with pytest.raises(ValidationError):
        append(b2, _entries(3, [0]), 2)


def test_full_budgets_give_t_times_nb(rng):
    buf = ReplayBuffer(10, 2)
    for t in range(5):
        z = rng.normal(size=(50, 2))
        y = np.repeat([0, 1], 25)
        buf = append(buf, select_mof(z, z, y, np.zeros((2, 2)), class_budgets(10, 2), t), t)
    assert len(buf) == 5 * 10


def test_stored_inputs_are_read_only(rng):
    x = rng.normal(size=(4, 2))
    sel = select_mof(x, x, np.array([0, 0, 1, 1]), np.zeros((2, 2)), 1)
    with pytest.raises(ValueError):
        sel[0].input[0] = 99.0
    x[:] = 0.0
    assert np.any(sel[0].input != 0.0)


def test_sample_batch_cases():
    buf = append(ReplayBuffer(4, 2), _entries(0, [0, 0, 1, 1]), 0)
    xs, ys = sample_batch(buf, 4, seed=0)
    assert sorted(xs[:, 0].tolist()) == [0.0, 1.0, 2.0, 3.0]
    one = append(ReplayBuffer(2, 2), _entries(0, [1]), 0)
    xs, ys = sample_batch(one, 1, seed=0)
    assert xs[0, 0] == 0.0 and ys[0] == 1
    a = sample_batch(buf, 7, seed=3)
    b = sample_batch(buf, 7, seed=3)
    assert np.array_equal(a[0], b[0])
    with pytest.raises(ValidationError):
        sample_batch(ReplayBuffer(2, 2), 1)


def test_sample_batch_uniform_with_replacement():
    buf = append(ReplayBuffer(4, 2), _entries(0, [0, 0, 1, 1]), 0)
    n = 10_000
    xs, _ = sample_batch(buf, n, seed=7)
    freq = np.bincount(xs[:, 0].astype(int), minlength=4)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(freq - n / 4) < 5 * sigma)
