"""Central finite-difference checks for every analytic gradient in the package.

Relative error is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
The floor (1e-3) keeps near-zero entries from turning double-precision
cancellation noise into huge ratios; above it the measure is purely relative.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .consistency import (
    PointwiseLoss,
    build_weight_grid,
    consistency_embedding_grads,
    consistency_losses,
)
from .instances import random_embeddings, random_grid, random_weights
from .rnnt import alpha_table, rnnt_backward
from .tensor import Rng
from . import toy

STEP = 1e-5
REL_FLOOR = 1e-3
MAE_KINK_GAP = 1e-3


def rel_err(analytic, numeric, floor: float = REL_FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = STEP, coords=None) -> np.ndarray:
    """Numeric gradient of scalar ``f`` at ``x``; only ``coords`` (index tuples) if given."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in coords if coords is not None else np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        fp = f(x)
        x[idx] = old - eps
        fm = f(x)
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def _log_z(blank, emit) -> float:
    return float(alpha_table(blank, emit)[-1, -1])


def check_rnnt_instance(grid) -> float:
    res = rnnt_backward(grid)
    b, e = grid.blank_lp, grid.emit_lp
    nb = central_difference(lambda x: _log_z(x, e), b)
    ne = central_difference(lambda x: _log_z(b, x), e)
    return max(rel_err(res.grad_blank, nb), rel_err(res.grad_emit, ne))


def check_consistency_instance(grid, w) -> dict[str, float]:
    """grad_blank, grad_emit and grad_w of l_hat_norm."""
    res = consistency_losses(grid, w)
    b, e = grid.blank_lp, grid.emit_lp

    def l_hat(blank, emit, weights):
        return _log_z(blank, emit + weights) - _log_z(blank, emit)

    return {
        "grad_blank": rel_err(res.grad_blank, central_difference(lambda x: l_hat(x, e, w), b)),
        "grad_emit": rel_err(res.grad_emit, central_difference(lambda x: l_hat(b, x, w), e)),
        "grad_w": rel_err(res.grad_w, central_difference(lambda x: l_hat(b, e, x), w)),
    }


def check_embedding_instance(grid, speech, text, kind) -> float:
    res = consistency_losses(grid, build_weight_grid(speech, text, kind))
    gs, gt = consistency_embedding_grads(res, speech, text, kind)
    b, e = grid.blank_lp, grid.emit_lp
    log_z = _log_z(b, e)

    def l_hat(s, t):
        return _log_z(b, e + build_weight_grid(s, t, kind)) - log_z

    ns = central_difference(lambda x: l_hat(x, text), speech)
    nt = central_difference(lambda x: l_hat(speech, x), text)
    return max(rel_err(gs, ns), rel_err(gt, nt))


def check_toy_instance(rng: Rng, coords_per_block: int = 5) -> float:
    """Total toy loss (all terms on, random text mask) against finite differences
    on ``coords_per_block`` random coordinates of each parameter block."""
    cfg = toy.TrainConfig(lambda_consistency=0.5, lambda_text=0.7, pointwise=PointwiseLoss.MSE)
    params = toy.ToyModelParams.init(rng, cfg.V, cfg.D, cfg.F, scale=0.5)
    example = toy.gen_dataset(rng, 1, cfg.V, cfg.F)[0]
    keep = toy.draw_text_mask(rng, len(example.labels), 0.3)
    _, _, grads = toy.loss_and_grads(params, example, cfg, keep)
    worst = 0.0
    for name, block in params.blocks().items():
        flat = rng.integers(0, block.size, coords_per_block)
        coords = [np.unravel_index(int(k), block.shape) for k in flat]

        def f(x, name=name):
            trial = params.copy()
            setattr(trial, name, x)
            return toy.loss_and_grads(trial, example, cfg, keep)[0]

        num = central_difference(f, block, coords=coords)
        ana = grads.blocks()[name]
        sel = tuple(np.array(c) for c in zip(*coords))
        worst = max(worst, rel_err(ana[sel], num[sel]))
    return worst


def run_suites(trials: int = 50, seed: int = 0, toy_trials: int | None = None) -> dict[str, float]:
    """Max relative error per gradient family over ``trials`` random instances."""
    rng = Rng(seed)
    report = {"rnnt": 0.0, "grad_blank": 0.0, "grad_emit": 0.0, "grad_w": 0.0, "embedding_mae": 0.0, "embedding_mse": 0.0}
    for _ in range(trials):
        T = rng.integers(1, 6)
        U = rng.integers(0, 4)
        grid = random_grid(rng, T, U)
        w = random_weights(rng, T, U)
        report["rnnt"] = max(report["rnnt"], check_rnnt_instance(grid))
        for k, v in check_consistency_instance(grid, w).items():
            report[k] = max(report[k], v)
        dim = rng.integers(1, 5)
        s, t = random_embeddings(rng, T, U, dim, kink_gap=MAE_KINK_GAP)
        report["embedding_mae"] = max(report["embedding_mae"], check_embedding_instance(grid, s, t, PointwiseLoss.MAE))
        report["embedding_mse"] = max(report["embedding_mse"], check_embedding_instance(grid, s, t, PointwiseLoss.MSE))
    toy_rng = rng.spawn(99)
    report["toy_chain"] = max(
        (check_toy_instance(toy_rng) for _ in range(toy_trials if toy_trials is not None else max(1, trials // 10))),
        default=0.0,
    )
    return report
