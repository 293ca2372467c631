"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .functional import (
    bilinear_sample,
    bilstm_sequence,
    conv2d,
    diag_gaussian_kl,
    gaussian_nll,
    gru_cell,
    layer_norm,
    log_softmax,
    logsumexp,
    lstm_cell,
    lstm_sequence,
    maxpool_points,
    weighted_cross_entropy,
)
from .optim import AdamW, ExponentialLR, adamw_step, exp_lr_schedule
from .tensor import (
    GraphReleasedError,
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    elementwise,
    matmul,
    no_grad,
    stack,
)

__all__ = [
    "Tensor", "as_tensor", "matmul", "concat", "stack", "elementwise", "no_grad",
    "ShapeError", "NonFiniteError", "GraphReleasedError",
    "layer_norm", "logsumexp", "log_softmax", "weighted_cross_entropy", "gaussian_nll",
    "diag_gaussian_kl", "lstm_cell", "lstm_sequence", "bilstm_sequence", "gru_cell",
    "conv2d", "maxpool_points", "bilinear_sample",
    "AdamW", "ExponentialLR", "adamw_step", "exp_lr_schedule",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
]
