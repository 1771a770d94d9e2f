"""Unweighted RNNT alignment lattice.

Node ``(t, u)`` has seen ``t`` frames and emitted ``u`` labels, for
``0 <= t <= T`` and ``0 <= u <= U``. Two kinds of edge leave it:

* horizontal ``(t, u) -> (t+1, u)``: blank, weight ``blank_lp[t, u]``;
* vertical ``(t, u) -> (t, u+1)``: label ``u+1``, weight ``emit_lp[t, u]``,
  only for ``t < T``.

Every alignment runs from ``(0, 0)`` to ``(T, U)`` and therefore ends with
the blank out of ``(T-1, U)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, UsageError
from .tensor import NEG_INF, log_add, log_softmax

# log-softmax outputs can exceed 0 by a few ulps
_LP_SLACK = 1e-9


@dataclass(frozen=True)
class LogProbGrid:
    blank_lp: np.ndarray  # T x (U+1)
    emit_lp: np.ndarray  # T x U

    def __post_init__(self):
        b = np.asarray(self.blank_lp, dtype=np.float64)
        e = np.asarray(self.emit_lp, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise UsageError(f"blank_lp must be T x (U+1) with T >= 1, got shape {b.shape}")
        T, U1 = b.shape
        if e.size == 0 and U1 == 1:
            e = e.reshape(T, 0)
        if e.shape != (T, U1 - 1):
            raise UsageError(f"emit_lp must have shape {(T, U1 - 1)}, got {e.shape}")
        for name, m in (("blank_lp", b), ("emit_lp", e)):
            if np.isnan(m).any() or (m > _LP_SLACK).any():
                raise UsageError(f"{name} entries must be log-probabilities (<= 0 or -inf)")
        object.__setattr__(self, "blank_lp", b)
        object.__setattr__(self, "emit_lp", e)

    @property
    def T(self) -> int:
        return self.blank_lp.shape[0]

    @property
    def U(self) -> int:
        return self.blank_lp.shape[1] - 1


@dataclass
class LatticeResult:
    value: float
    grad_blank: np.ndarray
    grad_emit: np.ndarray
    emit_marginals: np.ndarray
    blank_marginals: np.ndarray


def reduce_logits(logits: np.ndarray, labels: Sequence[int], blank_id: int) -> LogProbGrid:
    """Log-softmax joiner scores and keep only the blank and the correct label.

    ``logits`` has shape ``T x (U+1) x V``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 3:
        raise UsageError(f"logits must be rank 3, got shape {logits.shape}")
    T, U1, V = logits.shape
    if U1 != len(labels) + 1:
        raise UsageError(f"logits second axis must be U+1 = {len(labels) + 1}, got {U1}")
    if not 0 <= blank_id < V:
        raise UsageError(f"blank_id {blank_id} outside vocabulary of size {V}")
    if ((labels < 0) | (labels >= V)).any() or (labels == blank_id).any():
        raise UsageError("labels must lie in [0, V) and differ from blank_id")
    lsm = log_softmax(logits)
    blank_lp = lsm[:, :, blank_id]
    U = len(labels)
    emit_lp = lsm[:, np.arange(U), labels] if U else np.zeros((T, 0))
    return LogProbGrid(np.minimum(blank_lp, 0.0), np.minimum(emit_lp, 0.0))


def alpha_table(blank: np.ndarray, emit: np.ndarray) -> np.ndarray:
    """Forward log-variables, shape (T+1) x (U+1).

    Takes raw arrays rather than a grid so reweighted edges (which may be
    positive) can reuse it.
    """
    T, U1 = blank.shape
    b = blank.tolist()
    e = emit.tolist()
    alpha = [[NEG_INF] * U1 for _ in range(T + 1)]
    alpha[0][0] = 0.0
    for t in range(T + 1):
        row = alpha[t]
        prev = alpha[t - 1] if t else None
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            a = prev[u] + b[t - 1][u] if t else NEG_INF
            if u and t < T:
                a = log_add(a, row[u - 1] + e[t][u - 1])
            row[u] = a
    return np.array(alpha)


def beta_table(blank: np.ndarray, emit: np.ndarray) -> np.ndarray:
    """Backward log-variables: log-sum of paths from (t, u) to (T, U)."""
    T, U1 = blank.shape
    U = U1 - 1
    b = blank.tolist()
    e = emit.tolist()
    beta = [[NEG_INF] * U1 for _ in range(T + 1)]
    beta[T][U] = 0.0
    for t in range(T - 1, -1, -1):
        row = beta[t]
        nxt = beta[t + 1]
        for u in range(U, -1, -1):
            a = b[t][u] + nxt[u]
            if u < U:
                a = log_add(a, e[t][u] + row[u + 1])
            row[u] = a
    return np.array(beta)


def edge_marginals(
    blank: np.ndarray, emit: np.ndarray, alpha: np.ndarray, beta: np.ndarray, log_z: float
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior probability of each blank and each emit edge."""
    T = blank.shape[0]
    with np.errstate(invalid="ignore"):
        bm = np.exp(alpha[:T, :] + blank + beta[1:, :] - log_z)
        em = np.exp(alpha[:T, :-1] + emit + beta[:T, 1:] - log_z)
    # -inf + -inf stays -inf; only nan can come from masked inputs meeting +inf, which we forbid.
    # Clamp: rounding in alpha + beta - log_z can overshoot 1 by a few ulp.
    return np.clip(np.nan_to_num(bm, nan=0.0), 0.0, 1.0), np.clip(np.nan_to_num(em, nan=0.0), 0.0, 1.0)


def rnnt_forward(grid: LogProbGrid) -> float:
    """log p(Y|X) summed over every alignment."""
    return float(alpha_table(grid.blank_lp, grid.emit_lp)[grid.T, grid.U])


def rnnt_backward(grid: LogProbGrid) -> LatticeResult:
    """Forward-backward pass; gradients are with respect to the log-prob grids."""
    alpha = alpha_table(grid.blank_lp, grid.emit_lp)
    log_z = float(alpha[grid.T, grid.U])
    if log_z == NEG_INF:
        raise DegenerateInputError("lattice has no path with nonzero probability")
    beta = beta_table(grid.blank_lp, grid.emit_lp)
    bm, em = edge_marginals(grid.blank_lp, grid.emit_lp, alpha, beta, log_z)
    return LatticeResult(value=log_z, grad_blank=bm, grad_emit=em, emit_marginals=em, blank_marginals=bm)


def path_count(T: int, U: int) -> int:
    """Number of alignments, C(T-1+U, U)."""
    if T < 1 or U < 0:
        raise UsageError(f"need T >= 1 and U >= 0, got T={T}, U={U}")
    return math.comb(T - 1 + U, U)
