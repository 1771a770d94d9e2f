"""Desk-scale RNNT model trained with and without the consistency loss.

The model is tiny on purpose: an affine+tanh speech encoder, a lookup-table
text encoder, a one-step lookup predictor and a tanh joiner. Everything is
numpy with hand-written reverse mode, so the whole chain can be checked
against finite differences.

Output vocabulary is ``V + 1`` wide; index ``V`` is blank. The predictor
table has ``V + 1`` rows; row ``V`` is the start-of-sequence context.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .consistency import (
    PointwiseLoss,
    build_weight_grid,
    consistency_embedding_grads,
    consistency_losses,
)
from .errors import DegenerateInputError, FormatError, UsageError
from .rnnt import reduce_logits, rnnt_backward
from .tensor import Rng, log_softmax, parse_matrix

MAX_SYMBOLS_PER_FRAME = 10

# Rng.spawn keys: one independent stream per purpose
_INIT, _DATA, _ORDER, _MASK, _TEXT = 1, 2, 3, 4, 5


@dataclass
class ToyModelParams:
    speech_proj: np.ndarray  # F x D
    speech_bias: np.ndarray  # D
    text_table: np.ndarray  # V x D
    pred_table: np.ndarray  # (V+1) x D
    joiner_out: np.ndarray  # D x (V+1)
    joiner_bias: np.ndarray  # V+1

    @classmethod
    def init(cls, rng: Rng, V: int = 8, D: int = 8, F: int = 8, scale: float = 0.1) -> "ToyModelParams":
        if V < 2 or D < 2 or F < 1:
            raise UsageError(f"need V >= 2, D >= 2, F >= 1; got V={V}, D={D}, F={F}")
        return cls(
            speech_proj=rng.normal((F, D), scale=scale),
            speech_bias=rng.normal(D, scale=scale),
            text_table=rng.normal((V, D), scale=scale),
            pred_table=rng.normal((V + 1, D), scale=scale),
            joiner_out=rng.normal((D, V + 1), scale=scale),
            joiner_bias=rng.normal(V + 1, scale=scale),
        )

    @classmethod
    def zeros(cls, V: int = 8, D: int = 8, F: int = 8) -> "ToyModelParams":
        return cls(
            np.zeros((F, D)), np.zeros(D), np.zeros((V, D)),
            np.zeros((V + 1, D)), np.zeros((D, V + 1)), np.zeros(V + 1),
        )

    @property
    def V(self) -> int:
        return self.text_table.shape[0]

    def blocks(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def zeros_like(self) -> "ToyModelParams":
        return ToyModelParams(**{k: np.zeros_like(v) for k, v in self.blocks().items()})

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(**{k: v.copy() for k, v in self.blocks().items()})


@dataclass
class ToyExample:
    frames: np.ndarray  # T x F
    labels: list[int]
    alignment_truth: list[tuple[int, int]] = field(default_factory=list)  # [start, end) per label


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 2000
    learning_rate: float = 0.05
    lambda_consistency: float = 0.1
    lambda_text: float = 0.1
    pointwise: PointwiseLoss = PointwiseLoss.MAE
    text_mask_prob: float = 0.15
    enable_consistency: bool = True
    enable_text_branch: bool = True
    grad_clip: float = 0.0
    align_grad: bool = True
    text_source: str = "paired"
    V: int = 8
    D: int = 8
    F: int = 8
    n_train: int = 100
    n_test: int = 200
    noise: float = 0.3

    def __post_init__(self):
        self.pointwise = PointwiseLoss(self.pointwise)
        if self.lambda_consistency < 0 or self.lambda_text < 0:
            raise UsageError("loss weights must be nonnegative")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive")
        if self.text_source not in ("paired", "unpaired"):
            raise UsageError("text_source must be 'paired' or 'unpaired'")
        if not 0.0 <= self.text_mask_prob < 1.0:
            raise UsageError("text_mask_prob must lie in [0, 1)")

    @property
    def consistency_weight(self) -> float:
        return self.lambda_consistency if self.enable_consistency else 0.0

    @property
    def text_weight(self) -> float:
        return self.lambda_text if self.enable_text_branch else 0.0


def make_prototypes(rng: Rng, V: int, F: int) -> np.ndarray:
    p = rng.normal((V, F))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def gen_dataset(
    rng: Rng, n: int, V: int = 8, F: int = 8, noise: float = 0.3, prototypes: np.ndarray | None = None
) -> list[ToyExample]:
    """Synthetic utterances: each label holds its unit-norm prototype for 1-3
    frames (plus Gaussian noise); 0-2 pure-noise silence frames sit before,
    between and after labels. Prototypes are drawn first from ``rng`` unless given."""
    if V < 2 or F < 2:
        raise UsageError(f"need V >= 2 and F >= 2, got V={V}, F={F}")
    if prototypes is None:
        prototypes = make_prototypes(rng, V, F)
    out = []
    for _ in range(n):
        U = rng.integers(2, 7)
        labels = [int(x) for x in rng.integers(0, V, U)]
        durations = rng.integers(1, 4, U)
        gaps = rng.integers(0, 3, U + 1)
        rows: list[np.ndarray] = []
        spans = []
        for u in range(U + 1):
            rows.extend(rng.normal(F, scale=noise) if noise else np.zeros(F) for _ in range(int(gaps[u])))
            if u == U:
                break
            start = len(rows)
            for _ in range(int(durations[u])):
                rows.append(prototypes[labels[u]] + (rng.normal(F, scale=noise) if noise else 0.0))
            spans.append((start, len(rows)))
        out.append(ToyExample(np.array(rows), labels, spans))
    return out


def make_splits(cfg: TrainConfig) -> tuple[list[ToyExample], list[ToyExample]]:
    data = gen_dataset(Rng(cfg.seed).spawn(_DATA), cfg.n_train + cfg.n_test, cfg.V, cfg.F, cfg.noise)
    return data[: cfg.n_train], data[cfg.n_train:]


def encode_speech(params: ToyModelParams, frames: np.ndarray) -> np.ndarray:
    return np.tanh(frames @ params.speech_proj + params.speech_bias)


def encode_text(params: ToyModelParams, labels) -> np.ndarray:
    return params.text_table[labels]


def _check_labels(params: ToyModelParams, labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if ((labels < 0) | (labels >= params.V)).any():
        raise UsageError(f"labels must lie in [0, {params.V})")
    return labels


def _joint(params: ToyModelParams, enc: np.ndarray, labels: np.ndarray):
    prev = np.concatenate([[params.V], labels]).astype(np.int64)
    g = params.pred_table[prev]
    z = np.tanh(enc[:, None, :] + g[None, :, :])
    logits = z @ params.joiner_out + params.joiner_bias
    return logits, z, prev


def forward_logits(params: ToyModelParams, example: ToyExample):
    """(logits T x (U+1) x (V+1), speech embeddings T x D, text embeddings U x D)."""
    labels = _check_labels(params, example.labels)
    e_s = encode_speech(params, example.frames)
    logits, _, _ = _joint(params, e_s, labels)
    return logits, e_s, encode_text(params, labels)


def _joint_backward(params, grads, logits, z, prev, labels, d_blank, d_emit, scale) -> np.ndarray:
    """Accumulate ``scale *`` gradients of a grid-space loss into ``grads``; return d(encoder input)."""
    V = params.V
    U = len(labels)
    G = np.zeros_like(logits)
    G[:, :, V] = d_blank
    if U:
        G[:, np.arange(U), labels] += d_emit
    G *= scale
    d_logits = G - np.exp(log_softmax(logits)) * G.sum(axis=-1, keepdims=True)
    grads.joiner_out += np.einsum("tud,tuv->dv", z, d_logits)
    grads.joiner_bias += d_logits.sum(axis=(0, 1))
    d_pre = (d_logits @ params.joiner_out.T) * (1.0 - z**2)
    np.add.at(grads.pred_table, prev, d_pre.sum(axis=0))
    return d_pre.sum(axis=1)


def loss_and_grads(
    params: ToyModelParams,
    example: ToyExample,
    cfg: TrainConfig,
    text_keep: np.ndarray | None = None,
    text_labels: Sequence[int] | None = None,
) -> tuple[float, dict, ToyModelParams]:
    """Total objective ``rnnt + lambda * l_hat_norm + lambda_text * text_rnnt`` and its gradient.

    The text branch reads ``text_labels`` (the example's own transcript when
    omitted); ``text_keep`` is its row mask, all ones when omitted.
    """
    labels = _check_labels(params, example.labels)
    grads = params.zeros_like()

    e_s = encode_speech(params, example.frames)
    e_t = encode_text(params, labels)
    logits, z, prev = _joint(params, e_s, labels)
    grid = reduce_logits(logits, labels, blank_id=params.V)
    res = rnnt_backward(grid)
    rnnt_loss = -res.value
    d_blank = -res.grad_blank
    d_emit = -res.grad_emit

    w = build_weight_grid(e_s, e_t, cfg.pointwise)
    cons = consistency_losses(grid, w)
    lam = cfg.consistency_weight
    d_es = np.zeros_like(e_s)
    d_et = np.zeros_like(e_t)
    total = rnnt_loss
    if lam:
        total += lam * cons.l_hat_norm
        if cfg.align_grad:
            d_blank = d_blank + lam * cons.grad_blank
            d_emit = d_emit + lam * cons.grad_emit
        gs, gt = consistency_embedding_grads(cons, e_s, e_t, cfg.pointwise)
        d_es += lam * gs
        d_et += lam * gt
    d_es += _joint_backward(params, grads, logits, z, prev, labels, d_blank, d_emit, 1.0)
    np.add.at(grads.text_table, labels, d_et)

    text_loss = None
    if cfg.text_weight:
        t_labels = labels if text_labels is None else _check_labels(params, text_labels)
        keep = np.ones(len(t_labels)) if text_keep is None else np.asarray(text_keep, dtype=np.float64)
        t_emb = encode_text(params, t_labels)
        x = t_emb * keep[:, None]
        t_logits, t_z, t_prev = _joint(params, x, t_labels)
        t_res = rnnt_backward(reduce_logits(t_logits, t_labels, blank_id=params.V))
        text_loss = -t_res.value
        total += cfg.text_weight * text_loss
        d_x = _joint_backward(
            params, grads, t_logits, t_z, t_prev, t_labels, -t_res.grad_blank, -t_res.grad_emit, cfg.text_weight
        )
        np.add.at(grads.text_table, t_labels, d_x * keep[:, None])

    d_h = d_es * (1.0 - e_s**2)
    grads.speech_proj += example.frames.T @ d_h
    grads.speech_bias += d_h.sum(axis=0)

    metrics = {
        "rnnt_loss": rnnt_loss,
        "l_hat_norm": cons.l_hat_norm,
        "l_c_exact": cons.l_c_exact,
        "text_loss": text_loss,
    }
    return total, metrics, grads


def draw_text_mask(rng: Rng, U: int, prob: float) -> np.ndarray:
    return (~rng.bernoulli(prob, U)).astype(np.float64) if U else np.ones(0)


def draw_text_labels(rng: Rng, V: int) -> list[int]:
    """One unpaired transcript, same length and label law as ``gen_dataset``."""
    return [int(x) for x in rng.integers(0, V, rng.integers(2, 7))]


def train_step(
    params: ToyModelParams,
    example: ToyExample,
    cfg: TrainConfig,
    rng: Rng,
    text_labels: Sequence[int] | None = None,
) -> tuple[ToyModelParams, dict]:
    """One plain gradient-descent step (global-norm clipped at ``cfg.grad_clip``).

    ``rng`` supplies the text-branch mask. A degenerate lattice leaves
    ``params`` untouched and sets ``skipped``.
    """
    n_text = len(example.labels) if text_labels is None else len(text_labels)
    keep = draw_text_mask(rng, n_text, cfg.text_mask_prob)
    try:
        total, metrics, grads = loss_and_grads(params, example, cfg, keep, text_labels)
    except DegenerateInputError:
        return params, {"rnnt_loss": None, "l_hat_norm": None, "l_c_exact": None, "text_loss": None, "skipped": True}
    blocks = grads.blocks()
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in blocks.values())))
    scale = cfg.learning_rate
    if cfg.grad_clip and norm > cfg.grad_clip:
        scale *= cfg.grad_clip / norm
    new = ToyModelParams(**{k: v - scale * blocks[k] for k, v in params.blocks().items()})
    metrics["total_loss"] = total
    metrics["grad_norm"] = norm
    return new, metrics


def train(
    cfg: TrainConfig,
    train_set: Sequence[ToyExample] | None = None,
    on_step: Callable[[int, dict], None] | None = None,
) -> ToyModelParams:
    """Run ``cfg.steps`` single-example steps; example order and text masks
    come from streams independent of the loss configuration."""
    if train_set is None:
        train_set, _ = make_splits(cfg)
    root = Rng(cfg.seed)
    params = ToyModelParams.init(root.spawn(_INIT), cfg.V, cfg.D, cfg.F)
    order = root.spawn(_ORDER)
    mask_rng = root.spawn(_MASK)
    text_rng = root.spawn(_TEXT)
    for step in range(cfg.steps):
        ex = train_set[order.integers(0, len(train_set))]
        text = draw_text_labels(text_rng, cfg.V) if cfg.text_source == "unpaired" else None
        params, metrics = train_step(params, ex, cfg, mask_rng, text)
        if on_step is not None:
            on_step(step, metrics)
    return params


def greedy_decode(params: ToyModelParams, frames: np.ndarray) -> list[int]:
    V = params.V
    e_s = encode_speech(params, np.asarray(frames, dtype=np.float64))
    out: list[int] = []
    g = params.pred_table[V]
    for t in range(e_s.shape[0]):
        for _ in range(MAX_SYMBOLS_PER_FRAME):
            logits = np.tanh(e_s[t] + g) @ params.joiner_out + params.joiner_bias
            k = int(np.argmax(logits))
            if k == V:
                break
            out.append(k)
            g = params.pred_table[k]
    return out


def edit_distance(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def evaluate(
    params: ToyModelParams, dataset: Sequence[ToyExample], pointwise: PointwiseLoss | str = PointwiseLoss.MAE
) -> tuple[float, float]:
    """(token error rate over greedy decodes, mean exact consistency loss)."""
    if not dataset:
        raise UsageError("cannot evaluate on an empty dataset")
    errors = 0
    ref_tokens = 0
    l_c = []
    for ex in dataset:
        errors += edit_distance(greedy_decode(params, ex.frames), ex.labels)
        ref_tokens += len(ex.labels)
        logits, e_s, e_t = forward_logits(params, ex)
        grid = reduce_logits(logits, ex.labels, blank_id=params.V)
        l_c.append(consistency_losses(grid, build_weight_grid(e_s, e_t, pointwise)).l_c_exact)
    return errors / ref_tokens, float(np.mean(l_c))


def params_to_json(params: ToyModelParams) -> dict:
    return params.blocks()


def params_from_json(doc: dict) -> ToyModelParams:
    names = [f.name for f in dataclasses.fields(ToyModelParams)]
    missing = [k for k in names if k not in doc]
    if missing:
        raise FormatError(f"params file missing keys {missing}")
    return ToyModelParams(**{k: parse_matrix(doc[k], k) for k in names})
