"""Random lattice instances for verification suites."""

from __future__ import annotations

import numpy as np

from .ctc import CtcGrid
from .rnnt import LogProbGrid, reduce_logits
from .tensor import Rng, log_softmax


def random_labels(rng: Rng, U: int, vocab: int, blank_id: int = 0) -> list[int]:
    # non-blank ids are 1..vocab-1 when blank_id == 0
    ids = [i for i in range(vocab) if i != blank_id]
    return [ids[k] for k in rng.integers(0, len(ids), U).tolist()] if U else []


def random_grid(rng: Rng, T: int, U: int, vocab: int = 5, scale: float = 1.5) -> LogProbGrid:
    """Grid from Gaussian joiner logits, so rows are proper distributions."""
    logits = rng.normal((T, U + 1, vocab), scale=scale)
    return reduce_logits(logits, random_labels(rng, U, vocab), blank_id=0)


def random_weights(rng: Rng, T: int, U: int, high: float = 2.0) -> np.ndarray:
    return rng.uniform((T, U)) * high if U else np.zeros((T, 0))


def random_embeddings(rng: Rng, T: int, U: int, dim: int, kink_gap: float = 0.0):
    """Speech/text embeddings; with ``kink_gap > 0`` every pairwise coordinate
    difference is kept at least that far from zero (MAE is non-smooth there)."""
    while True:
        speech = rng.normal((T, dim))
        text = rng.normal((U, dim))
        if kink_gap <= 0 or U == 0:
            return speech, text
        if np.abs(speech[:, None, :] - text[None, :, :]).min() >= kink_gap:
            return speech, text


def random_ctc(rng: Rng, T: int, U: int, vocab: int = 4, repeats: bool = True):
    """(grid, labels). With ``repeats`` labels are drawn freely, so repeats occur."""
    if repeats:
        labels = [int(x) for x in rng.integers(1, vocab, U)] if U else []
    else:
        labels = [1 + int(x) for x in rng.integers(0, vocab - 1, 1)] if U else []
        while len(labels) < U:
            nxt = 1 + int(rng.integers(0, vocab - 1))
            if nxt != labels[-1]:
                labels.append(nxt)
    frame_lp = log_softmax(rng.normal((T, vocab), scale=1.5))
    cols = [0] + [c for lab in labels for c in (lab, 0)]
    return CtcGrid.from_labels(frame_lp[:, cols], labels), labels
