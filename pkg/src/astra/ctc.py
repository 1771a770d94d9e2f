"""CTC analog of the weighted lattice objective.

States are the blank-interleaved expansion ``(eps, y1, eps, y2, ..., eps)``
of length ``S = 2U + 1``; odd state ``2u + 1`` emits label ``u``. Weighting
is per frame: every frame spent in state ``2u + 1`` multiplies in
``exp(w[t, u])``. Unlike the RNNT case a label can occupy several frames, so
a constant shift of ``w`` moves the weighted log-sum by the posterior
expected number of non-blank frames, not by ``U``. The alternative, weighting
only one designated frame per label (e.g. its first), would restore the ``U``
shift law but is not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, UsageError
from .tensor import NEG_INF, log_add

_LP_SLACK = 1e-9


def skip_forbidden(labels: Sequence) -> np.ndarray:
    """True at expanded positions whose symbol equals the one two positions back.

    Blank positions always qualify; label positions qualify for a repeated label.
    """
    labels = list(labels)
    S = 2 * len(labels) + 1
    mask = np.ones(S, dtype=bool)
    for u in range(len(labels)):
        mask[2 * u + 1] = u > 0 and labels[u] == labels[u - 1]
    return mask


@dataclass(frozen=True)
class CtcGrid:
    log_probs: np.ndarray  # T x (2U+1)
    same_label_mask: np.ndarray  # 2U+1 bools

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] % 2 != 1:
            raise UsageError(f"ctc log_probs must be T x (2U+1) with T >= 1, got {lp.shape}")
        if np.isnan(lp).any() or (lp > _LP_SLACK).any():
            raise UsageError("ctc log_probs must be log-probabilities")
        mask = np.asarray(self.same_label_mask, dtype=bool).reshape(-1)
        if mask.shape != (lp.shape[1],):
            raise UsageError(f"same_label_mask must have length {lp.shape[1]}, got {mask.size}")
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "same_label_mask", mask)

    @classmethod
    def from_labels(cls, log_probs, labels: Sequence) -> "CtcGrid":
        return cls(log_probs, skip_forbidden(labels))

    @property
    def T(self) -> int:
        return self.log_probs.shape[0]

    @property
    def U(self) -> int:
        return self.log_probs.shape[1] // 2


def _state_weights(grid: CtcGrid, weights) -> np.ndarray:
    lp = grid.log_probs.copy()
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.size == 0:
            w = w.reshape(grid.T, 0)
        if w.shape != (grid.T, grid.U):
            raise UsageError(f"weights must have shape {(grid.T, grid.U)}, got {w.shape}")
        lp[:, 1::2] += w
    return lp


def _alpha(lp: np.ndarray, skip_bad: np.ndarray) -> list[list[float]]:
    T, S = lp.shape
    rows = lp.tolist()
    bad = skip_bad.tolist()
    alpha = [[NEG_INF] * S for _ in range(T)]
    alpha[0][0] = rows[0][0]
    if S > 1:
        alpha[0][1] = rows[0][1]
    for t in range(1, T):
        prev, cur, r = alpha[t - 1], alpha[t], rows[t]
        for s in range(S):
            a = prev[s]
            if s >= 1:
                a = log_add(a, prev[s - 1])
            if s >= 2 and not bad[s]:
                a = log_add(a, prev[s - 2])
            cur[s] = a + r[s] if a != NEG_INF else NEG_INF
    return alpha


def _beta(lp: np.ndarray, skip_bad: np.ndarray) -> list[list[float]]:
    """beta[t][s]: log-mass of completions after frame t, given state s at t (excludes lp[t][s])."""
    T, S = lp.shape
    rows = lp.tolist()
    bad = skip_bad.tolist()
    beta = [[NEG_INF] * S for _ in range(T)]
    beta[T - 1][S - 1] = 0.0
    if S > 1:
        beta[T - 1][S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt, cur, r = beta[t + 1], beta[t], rows[t + 1]
        for s in range(S):
            a = nxt[s] + r[s]
            if s + 1 < S:
                a = log_add(a, nxt[s + 1] + r[s + 1])
            if s + 2 < S and not bad[s + 2]:
                a = log_add(a, nxt[s + 2] + r[s + 2])
            cur[s] = a
    return beta


def _final(alpha_last: list[float]) -> float:
    S = len(alpha_last)
    return log_add(alpha_last[S - 1], alpha_last[S - 2]) if S > 1 else alpha_last[0]


def ctc_forward(grid: CtcGrid) -> float:
    """Log-probability of the label sequence summed over all CTC paths."""
    value = _final(_alpha(grid.log_probs, grid.same_label_mask)[-1])
    if value == NEG_INF:
        raise DegenerateInputError("no valid CTC path (too few frames or all paths masked)")
    return value


def ctc_weighted_forward(grid: CtcGrid, weights) -> float:
    """Same as ``ctc_forward`` with each frame in label state ``2u+1`` weighted by ``exp(w[t, u])``."""
    value = _final(_alpha(_state_weights(grid, weights), grid.same_label_mask)[-1])
    if value == NEG_INF:
        raise DegenerateInputError("no valid CTC path (too few frames or all paths masked)")
    return value


def ctc_state_posteriors(grid: CtcGrid, weights=None) -> tuple[float, np.ndarray]:
    """(log-sum, T x S occupancy posteriors) of the (optionally weighted) lattice.

    Column ``2u+1`` of the posterior matrix is the derivative of the log-sum
    with respect to ``w[:, u]``.
    """
    lp = _state_weights(grid, weights)
    alpha = np.array(_alpha(lp, grid.same_label_mask))
    beta = np.array(_beta(lp, grid.same_label_mask))
    value = _final(alpha[-1].tolist())
    if value == NEG_INF:
        raise DegenerateInputError("no valid CTC path (too few frames or all paths masked)")
    post = np.exp(alpha + beta - value)
    return value, np.clip(np.nan_to_num(post, nan=0.0), 0.0, 1.0)
