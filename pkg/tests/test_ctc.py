import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astra.ctc import CtcGrid, ctc_forward, ctc_state_posteriors, ctc_weighted_forward, skip_forbidden
from astra.errors import DegenerateInputError, UsageError
from astra.instances import random_ctc, random_weights
from astra.oracle import ctc_oracle
from astra.tensor import Rng


def test_skip_mask():
    np.testing.assert_array_equal(skip_forbidden([1, 2, 2]), [1, 0, 1, 0, 1, 1, 1])
    np.testing.assert_array_equal(skip_forbidden([]), [1])


def test_single_frame_examples():
    lp = np.log([[0.3]])
    assert ctc_forward(CtcGrid.from_labels(lp, [])) == pytest.approx(np.log(0.3))
    lp = np.log([[0.2, 0.5, 0.3]])
    g = CtcGrid.from_labels(lp, [4])
    assert ctc_forward(g) == pytest.approx(np.log(0.5))
    assert ctc_weighted_forward(g, [[0.7]]) == pytest.approx(np.log(0.5) + 0.7)


def test_too_short_is_degenerate():
    g = CtcGrid.from_labels(np.full((2, 5), np.log(0.2)), [3, 3])
    assert ctc_oracle(2, [3, 3], g.log_probs) == -np.inf
    with pytest.raises(DegenerateInputError):
        ctc_forward(g)


def test_shape_checks():
    with pytest.raises(UsageError):
        CtcGrid(np.zeros((2, 4)), np.ones(4, bool))
    g = CtcGrid.from_labels(np.full((3, 3), -1.0), [1])
    with pytest.raises(UsageError):
        ctc_weighted_forward(g, np.zeros((3, 2)))


def test_zero_weights_reduce(rng):
    g, labels = random_ctc(rng, 5, 2)
    assert ctc_weighted_forward(g, np.zeros((5, 2))) == ctc_forward(g)


def test_distinct_labels_t3u2_against_oracle(rng):
    g, labels = random_ctc(rng, 3, 2, repeats=False)
    assert abs(ctc_forward(g) - ctc_oracle(3, labels, g.log_probs)) < 1e-9


def test_weighted_t4u2_against_oracle(rng):
    g, labels = random_ctc(rng, 4, 2)
    w = random_weights(rng, 4, 2)
    assert abs(ctc_weighted_forward(g, w) - ctc_oracle(4, labels, g.log_probs, w)) < 1e-9


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**32))
def test_oracle_equivalence(T, U, seed):
    r = Rng(seed)
    g, labels = random_ctc(r, T, U)
    w = random_weights(r, T, U)
    ref = ctc_oracle(T, labels, g.log_probs)
    if ref == -np.inf:
        with pytest.raises(DegenerateInputError):
            ctc_forward(g)
        return
    assert abs(ctc_forward(g) - ref) < 1e-9
    assert abs(ctc_weighted_forward(g, w) - ctc_oracle(T, labels, g.log_probs, w)) < 1e-9


def test_posteriors_sum_to_one_per_frame(rng):
    g, _ = random_ctc(rng, 6, 2, repeats=False)
    _, post = ctc_state_posteriors(g, random_weights(rng, 6, 2))
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


def test_shift_law_uses_expected_nonblank_frames(rng):
    # d log_zw / dc at w + c equals the posterior count of non-blank frames, not U
    worst = 0.0
    for _ in range(10):
        g, _ = random_ctc(rng, 6, 2, repeats=False)
        w = random_weights(rng, 6, 2)
        h = 1e-5
        fd = (ctc_weighted_forward(g, w + h) - ctc_weighted_forward(g, w - h)) / (2 * h)
        _, post = ctc_state_posteriors(g, w)
        worst = max(worst, abs(fd - post[:, 1::2].sum()))
    assert worst < 1e-6
