import numpy as np
import pytest

from ldaucid import kernels


@pytest.mark.parametrize("fn", [kernels.match_diffs_np, kernels.match_diffs_nb])
def test_match_diffs_pairs_ranks(fn):
    px = np.array([[3.0, 1.0, 2.0]])
    py = np.array([[10.0, 30.0, 20.0]])
    # ranks: px -> (2, 0, 1); py sorted -> 10, 20, 30
    np.testing.assert_array_equal(fn(px, py), [[3.0 - 30.0, 1.0 - 10.0, 2.0 - 20.0]])


@pytest.mark.parametrize("fn", [kernels.match_diffs_np, kernels.match_diffs_nb])
def test_match_diffs_ties_follow_index_order(fn):
    px = np.array([[0.0, 0.0, 0.0]])
    py = np.array([[5.0, 6.0, 7.0]])
    np.testing.assert_array_equal(fn(px, py), [[-5.0, -6.0, -7.0]])


def test_backends_bit_identical(rng):
    px = np.round(rng.normal(size=(16, 40)), 1)  # rounding creates ties
    py = rng.normal(size=(16, 40))
    assert np.array_equal(kernels.match_diffs_np(px, py), kernels.match_diffs_nb(px, py))


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_assignment_backends_agree(n, rng):
    c = rng.random((n, n))
    assert kernels.min_assignment_cost_nb(c) == pytest.approx(kernels.min_assignment_cost_np(c), abs=1e-12)


def test_assignment_identity_cost():
    c = 1.0 - np.eye(4)
    assert kernels.min_assignment_cost_np(c) == 0.0
    assert kernels.min_assignment_cost_nb(c) == 0.0


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, expected):
    import os
    import subprocess
    import sys

    env = dict(os.environ, LDAUCID_DISABLE_NUMBA=flag)
    code = "import ldaucid, ldaucid.kernels as k; print(ldaucid.backend(), k.min_assignment_cost.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == expected
    assert out[1].endswith("_nb" if expected == "numba" else "_np")


def test_public_dispatch_uses_fastest_sort_matching():
    assert kernels.match_diffs is kernels.match_diffs_np
