"""Alignment-marginalized speech/text consistency as a weighted RNNT objective."""

from .consistency import (
    ConsistencyResult,
    PointwiseLoss,
    build_weight_grid,
    consistency_embedding_grads,
    consistency_losses,
    expected_path_weight,
    weighted_forward,
)
from .ctc import CtcGrid, ctc_forward, ctc_state_posteriors, ctc_weighted_forward
from .errors import AstraError, DegenerateInputError, FormatError, UsageError
from .rnnt import LatticeResult, LogProbGrid, path_count, reduce_logits, rnnt_backward, rnnt_forward
from .tensor import NEG_INF, Rng, log_sum_exp, read_tensor_json, write_tensor_json

__all__ = [
    "NEG_INF",
    "AstraError",
    "ConsistencyResult",
    "CtcGrid",
    "DegenerateInputError",
    "FormatError",
    "LatticeResult",
    "LogProbGrid",
    "PointwiseLoss",
    "Rng",
    "UsageError",
    "build_weight_grid",
    "consistency_embedding_grads",
    "consistency_losses",
    "ctc_forward",
    "ctc_state_posteriors",
    "ctc_weighted_forward",
    "expected_path_weight",
    "log_sum_exp",
    "path_count",
    "read_tensor_json",
    "reduce_logits",
    "rnnt_backward",
    "rnnt_forward",
    "weighted_forward",
    "write_tensor_json",
]
