"""Alignment-marginalized speech/text consistency on the RNNT lattice.

For a fixed alignment the consistency loss is the sum of pointwise losses
``w[t, u] = L(speech[t], text[u])`` over its label-emitting edges; blank
edges contribute nothing. Two aggregates over all alignments are computed:

* ``l_c_exact``: posterior expectation of that sum, via a first-order
  expectation semiring in a single forward pass.
* ``l_hat_norm = log_zw - log_z``: log of the posterior expectation of its
  exponential. ``log_zw`` is the ordinary RNNT forward value with every
  emit edge reweighted by ``exp(w)``, so the surrogate costs one extra
  lattice pass and has gradients given by edge posteriors. By Jensen,
  ``l_hat_norm >= l_c_exact``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, UsageError
from .rnnt import LogProbGrid, alpha_table, beta_table, edge_marginals
from .tensor import NEG_INF


class PointwiseLoss(str, enum.Enum):
    MAE = "mae"
    MSE = "mse"


@dataclass
class ConsistencyResult:
    log_z: float
    log_zw: float
    l_hat_norm: float
    l_hat_literal: float
    l_c_exact: float
    grad_w: np.ndarray
    grad_blank: np.ndarray
    grad_emit: np.ndarray
    weighted_emit_marginals: np.ndarray
    emit_marginals: np.ndarray
    blank_marginals: np.ndarray

    def to_json(self) -> dict:
        return {
            "log_z": self.log_z,
            "log_zw": self.log_zw,
            "l_hat_norm": self.l_hat_norm,
            "l_hat_literal": self.l_hat_literal,
            "l_c_exact": self.l_c_exact,
            "grad_w": self.grad_w,
        }


def _as_embeddings(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and x.size == 0:
        x = x.reshape(0, 1)
    if x.ndim != 2 or x.shape[1] < 1:
        raise UsageError(f"{name} must be a length x dim matrix with dim >= 1, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise UsageError(f"{name} contains non-finite values")
    return x


def build_weight_grid(speech, text, kind: PointwiseLoss | str = PointwiseLoss.MAE) -> np.ndarray:
    """``w[t, u]`` = pointwise loss between speech frame t and text token u.

    Both losses average over the embedding dimension.
    """
    kind = PointwiseLoss(kind)
    speech = _as_embeddings(speech, "speech")
    text = _as_embeddings(text, "text") if np.size(text) else np.zeros((0, speech.shape[1]))
    if speech.shape[1] != text.shape[1]:
        raise UsageError(f"embedding dims differ: speech {speech.shape[1]}, text {text.shape[1]}")
    if speech.shape[0] < 1:
        raise UsageError("speech sequence must have at least one frame")
    diff = speech[:, None, :] - text[None, :, :]
    if kind is PointwiseLoss.MAE:
        return np.abs(diff).mean(axis=-1)
    return (diff**2).mean(axis=-1)


def _check_weights(grid: LogProbGrid, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        w = w.reshape(grid.T, 0)
    if w.shape != (grid.T, grid.U):
        raise UsageError(f"weights must have shape {(grid.T, grid.U)}, got {w.shape}")
    if not np.isfinite(w).all():
        raise UsageError("weights must be finite")
    return w


def weighted_forward(grid: LogProbGrid, weights) -> float:
    """log of sum over alignments of p(a) * exp(sum of w on its emit edges)."""
    w = _check_weights(grid, weights)
    return float(alpha_table(grid.blank_lp, grid.emit_lp + w)[grid.T, grid.U])


def expected_path_weight(grid: LogProbGrid, weights) -> float:
    """Posterior expectation of the per-alignment weight sum, in one forward pass.

    Each node carries ``(log alpha, mean)``: the log-mass of prefixes
    reaching it and their probability-weighted mean accumulated weight.
    Keeping the second slot as a normalized mean rather than an unnormalized
    sum is what keeps it bounded for any ``log alpha``.
    """
    w = _check_weights(grid, weights)
    T, U = grid.T, grid.U
    b = grid.blank_lp.tolist()
    e = grid.emit_lp.tolist()
    wl = w.tolist()
    la = [[NEG_INF] * (U + 1) for _ in range(T + 1)]
    mean = [[0.0] * (U + 1) for _ in range(T + 1)]
    la[0][0] = 0.0
    for t in range(T + 1):
        for u in range(U + 1):
            if t == 0 and u == 0:
                continue
            # incoming (log-mass, mean) pairs
            h = (la[t - 1][u] + b[t - 1][u], mean[t - 1][u]) if t else (NEG_INF, 0.0)
            v = (la[t][u - 1] + e[t][u - 1], mean[t][u - 1] + wl[t][u - 1]) if (u and t < T) else (NEG_INF, 0.0)
            m = max(h[0], v[0])
            if m == NEG_INF:
                continue
            ph = math.exp(h[0] - m) if h[0] != NEG_INF else 0.0
            pv = math.exp(v[0] - m) if v[0] != NEG_INF else 0.0
            s = ph + pv
            la[t][u] = m + math.log(s)
            mean[t][u] = (ph * h[1] + pv * v[1]) / s
    if la[T][U] == NEG_INF:
        raise DegenerateInputError("lattice has no path with nonzero probability")
    return float(mean[T][U])


def consistency_losses(grid: LogProbGrid, weights) -> ConsistencyResult:
    w = _check_weights(grid, weights)
    blank, emit = grid.blank_lp, grid.emit_lp
    alpha = alpha_table(blank, emit)
    log_z = float(alpha[grid.T, grid.U])
    if log_z == NEG_INF:
        raise DegenerateInputError("lattice has no path with nonzero probability")
    beta = beta_table(blank, emit)
    bm, em = edge_marginals(blank, emit, alpha, beta, log_z)

    emit_w = emit + w
    alpha_w = alpha_table(blank, emit_w)
    log_zw = float(alpha_w[grid.T, grid.U])
    beta_w = beta_table(blank, emit_w)
    bm_w, em_w = edge_marginals(blank, emit_w, alpha_w, beta_w, log_zw)

    return ConsistencyResult(
        log_z=log_z,
        log_zw=log_zw,
        l_hat_norm=log_zw - log_z,
        l_hat_literal=log_zw * float(np.exp(-log_z)),
        l_c_exact=expected_path_weight(grid, w),
        grad_w=em_w,
        grad_blank=bm_w - bm,
        grad_emit=em_w - em,
        weighted_emit_marginals=em_w,
        emit_marginals=em,
        blank_marginals=bm,
    )


def consistency_embedding_grads(
    result: ConsistencyResult, speech, text, kind: PointwiseLoss | str = PointwiseLoss.MAE
) -> tuple[np.ndarray, np.ndarray]:
    """Chain ``grad_w`` back through the pointwise loss to both embedding sequences.

    MAE uses the subgradient ``sign(d) / D`` with ``sign(0) = 0``.
    """
    kind = PointwiseLoss(kind)
    speech = _as_embeddings(speech, "speech")
    text = np.asarray(text, dtype=np.float64).reshape(-1, speech.shape[1])
    g = np.asarray(result.grad_w)
    if g.shape != (speech.shape[0], text.shape[0]):
        raise UsageError(f"grad_w shape {g.shape} does not match embeddings {(speech.shape[0], text.shape[0])}")
    D = speech.shape[1]
    diff = speech[:, None, :] - text[None, :, :]
    dl = np.sign(diff) / D if kind is PointwiseLoss.MAE else 2.0 * diff / D
    contrib = g[:, :, None] * dl
    return contrib.sum(axis=1), -contrib.sum(axis=0)
