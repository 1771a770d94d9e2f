"""Brute-force ground truth by explicit alignment enumeration.

Deliberately shares no code with the lattice recursions: RNNT paths come
from choosing the emitting frame of each label, CTC paths from generating
frame-symbol strings and collapsing them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError

PATH_CAP = 10**6
BLANK = "blank"
EMIT = "emit"


@dataclass(frozen=True)
class AlignmentPath:
    edges: tuple[tuple[str, int, int], ...]
    log_prob: float = 0.0
    l_ca: float = 0.0


@dataclass(frozen=True)
class OracleLosses:
    log_z: float
    log_zw: float
    l_c_exact: float
    l_hat_norm: float


def _lse(values: Sequence[float]) -> float:
    m = max(values)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def enumerate_rnnt_paths(T: int, U: int, cap: int = PATH_CAP) -> list[AlignmentPath]:
    if T < 1 or U < 0:
        raise UsageError(f"need T >= 1 and U >= 0, got T={T}, U={U}")
    if math.comb(T - 1 + U, U) > cap:
        raise UsageError(f"T={T}, U={U} has more than {cap} alignments")
    paths = []
    # emission frames of labels 1..U, non-decreasing
    for frames in itertools.combinations_with_replacement(range(T), U):
        edges = []
        u = 0
        for t in range(T):
            while u < U and frames[u] == t:
                edges.append((EMIT, t, u))
                u += 1
            edges.append((BLANK, t, u))
        paths.append(AlignmentPath(tuple(edges)))
    return paths


def score_rnnt_path(path: AlignmentPath, blank_lp, emit_lp, weights=None) -> AlignmentPath:
    lp = 0.0
    l_ca = 0.0
    for kind, t, u in path.edges:
        if kind == BLANK:
            lp += float(blank_lp[t][u])
        else:
            lp += float(emit_lp[t][u])
            if weights is not None:
                l_ca += float(weights[t][u])
    return AlignmentPath(path.edges, lp, l_ca)


def oracle_losses(grid, weights) -> OracleLosses:
    """log_z, log_zw, l_c_exact and l_hat_norm by direct summation over alignments."""
    w = np.asarray(weights, dtype=np.float64).reshape(grid.T, grid.U)
    scored = [score_rnnt_path(p, grid.blank_lp, grid.emit_lp, w) for p in enumerate_rnnt_paths(grid.T, grid.U)]
    log_z = _lse([p.log_prob for p in scored])
    log_zw = _lse([p.log_prob + p.l_ca for p in scored])
    l_c = math.fsum(math.exp(p.log_prob - log_z) * p.l_ca for p in scored if p.log_prob != -math.inf)
    return OracleLosses(log_z, log_zw, l_c, log_zw - log_z)


def enumerate_ctc_paths(T: int, labels: Sequence, cap: int = PATH_CAP) -> list[tuple[int, ...]]:
    """All per-frame expanded-state sequences that collapse to ``labels``.

    A state sequence is reported as expanded indices: ``2k`` for a blank after
    ``k`` emitted labels, ``2k+1`` while emitting label ``k``. Too few frames
    gives an empty list.
    """
    labels = list(labels)
    U = len(labels)
    symbols = [None] + sorted(set(labels), key=repr)
    out: list[tuple[int, ...]] = []

    def extend(prefix_states, emitted, last):
        if len(prefix_states) == T:
            if emitted == U:
                out.append(tuple(prefix_states))
                if len(out) > cap:
                    raise UsageError(f"more than {cap} CTC paths")
            return
        for sym in symbols:
            if sym is None:
                extend(prefix_states + [2 * emitted], emitted, None)
            elif sym == last:
                # repeat merges into the current label
                extend(prefix_states + [prefix_states[-1]], emitted, last)
            elif emitted < U and labels[emitted] == sym:
                extend(prefix_states + [2 * emitted + 1], emitted + 1, sym)

    if T >= 1:
        extend([], 0, None)
    return out


def ctc_oracle(T: int, labels: Sequence, log_probs, weights=None) -> float:
    """Log-sum over enumerated CTC paths, optionally weighted per non-blank frame."""
    lp = np.asarray(log_probs, dtype=np.float64)
    scores = []
    for states in enumerate_ctc_paths(T, labels):
        s = 0.0
        for t, k in enumerate(states):
            s += float(lp[t][k])
            if weights is not None and k % 2 == 1:
                s += float(weights[t][k // 2])
        scores.append(s)
    return _lse(scores) if scores else -math.inf
