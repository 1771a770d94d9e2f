import itertools
import math

import numpy as np
import pytest

from astra.errors import UsageError
from astra.instances import random_grid, random_weights
from astra.oracle import (
    BLANK,
    EMIT,
    enumerate_ctc_paths,
    enumerate_rnnt_paths,
    oracle_losses,
    score_rnnt_path,
)
from astra.rnnt import LogProbGrid, path_count


def test_rnnt_enumeration_small():
    (only,) = enumerate_rnnt_paths(1, 0)
    assert only.edges == ((BLANK, 0, 0),)
    paths = {p.edges for p in enumerate_rnnt_paths(2, 1)}
    assert paths == {
        ((EMIT, 0, 0), (BLANK, 0, 1), (BLANK, 1, 1)),
        ((BLANK, 0, 0), (EMIT, 1, 0), (BLANK, 1, 1)),
    }


@pytest.mark.parametrize("T, U", [(1, 0), (1, 3), (2, 1), (4, 3), (6, 4), (3, 0)])
def test_rnnt_enumeration_count_and_shape(T, U):
    paths = enumerate_rnnt_paths(T, U)
    assert len(paths) == path_count(T, U) == math.comb(T - 1 + U, U)
    assert len({p.edges for p in paths}) == len(paths)
    for p in paths:
        kinds = [k for k, _, _ in p.edges]
        assert kinds.count(BLANK) == T and kinds.count(EMIT) == U
        assert p.edges[-1] == (BLANK, T - 1, U)
        assert all(t < T for _, t, _ in p.edges)
        # monotone walk from (0, 0)
        t = u = 0
        for kind, et, eu in p.edges:
            assert (et, eu) == (t, u)
            t, u = (t + 1, u) if kind == BLANK else (t, u + 1)
        assert (t, u) == (T, U)


def test_path_cap():
    with pytest.raises(UsageError):
        enumerate_rnnt_paths(12, 12, cap=10**6)
    with pytest.raises(UsageError):
        enumerate_rnnt_paths(0, 1)


def test_oracle_losses_single_path():
    grid = LogProbGrid([[-0.3, -0.2]], [[-1.1]])
    out = oracle_losses(grid, [[0.75]])
    assert out.log_z == pytest.approx(-1.3)
    assert out.l_hat_norm == pytest.approx(0.75)
    assert out.l_c_exact == pytest.approx(0.75)


def test_oracle_losses_zero_weights(rng):
    grid = random_grid(rng, 4, 3)
    out = oracle_losses(grid, np.zeros((4, 3)))
    assert out.l_c_exact == 0.0
    assert out.l_hat_norm == pytest.approx(0.0, abs=1e-15)


def test_oracle_uniform_t2u1(uniform_t2u1):
    out = oracle_losses(uniform_t2u1, np.ones((2, 1)))
    assert out.log_z == pytest.approx(math.log(0.25), abs=1e-15)
    assert out.log_zw == pytest.approx(math.log(0.25) + 1, abs=1e-15)


def test_oracle_is_order_independent(rng):
    grid = random_grid(rng, 4, 2)
    w = random_weights(rng, 4, 2)
    paths = [score_rnnt_path(p, grid.blank_lp, grid.emit_lp, w) for p in enumerate_rnnt_paths(4, 2)]
    fwd = oracle_losses(grid, w)
    lps = sorted(p.log_prob + p.l_ca for p in paths)
    m = max(lps)
    assert m + math.log(sum(math.exp(x - m) for x in reversed(lps))) == pytest.approx(fwd.log_zw, abs=1e-13)


def test_ctc_enumeration_small():
    assert enumerate_ctc_paths(1, ["a"]) == [(1,)]
    assert sorted(enumerate_ctc_paths(2, ["a"])) == sorted([(0, 1), (1, 2), (1, 1)])
    assert enumerate_ctc_paths(2, ["a", "a"]) == []
    assert sorted(enumerate_ctc_paths(3, ["a", "a"])) == [(1, 2, 3)]
    assert enumerate_ctc_paths(1, []) == [(0,)]


def _collapse(seq):
    out = []
    prev = None
    for x in seq:
        if x is not None and x != prev:
            out.append(x)
        prev = x
    return out


@pytest.mark.parametrize("T, labels", [(5, [1, 2, 3]), (5, [1, 1]), (4, [2, 2, 2]), (6, [1, 2, 1]), (3, [])])
def test_ctc_enumeration_matches_collapse(T, labels):
    alphabet = [None] + sorted(set(labels))
    expected = sum(_collapse(s) == labels for s in itertools.product(alphabet, repeat=T))
    paths = enumerate_ctc_paths(T, labels)
    assert len(paths) == len(set(paths)) == expected
