"""Minimal reverse-mode autodiff over float64 NumPy arrays."""

from .checkpoint import FORMAT_VERSION, load_arrays, save_arrays
from .ops import (
    affine,
    batchnorm1d,
    conv1d,
    cosine_similarity,
    global_maxpool1d,
    maxpool1d,
    relu,
    softmax_cross_entropy,
)
from .optim import AdamW, ExponentialLr, adamw_update
from .tensor import Tape, Tensor, as_tensor, backward, record_op

__all__ = [
    "AdamW",
    "ExponentialLr",
    "FORMAT_VERSION",
    "Tape",
    "Tensor",
    "adamw_update",
    "affine",
    "as_tensor",
    "backward",
    "batchnorm1d",
    "conv1d",
    "cosine_similarity",
    "global_maxpool1d",
    "load_arrays",
    "maxpool1d",
    "record_op",
    "relu",
    "save_arrays",
    "softmax_cross_entropy",
]
