"""Minimal differentiable-computation kernel backing the learned components."""
from .tensor import Tensor, as_tensor, clamp, concat, maximum_const, softmax, stack, tensor, where
from .nn import (
    ParameterSet,
    dense,
    dropout,
    gelu,
    init_dense,
    init_layer_norm,
    layer_norm,
    rope_apply,
    scaled_dot_attention,
    sinusoidal_embedding,
)
from .optim import AdamW, cosine_lr
from .checkpoint import load_checkpoint, restore_into, save_checkpoint

__all__ = [
    "AdamW",
    "ParameterSet",
    "Tensor",
    "as_tensor",
    "clamp",
    "concat",
    "cosine_lr",
    "dense",
    "dropout",
    "gelu",
    "init_dense",
    "init_layer_norm",
    "layer_norm",
    "load_checkpoint",
    "maximum_const",
    "restore_into",
    "rope_apply",
    "save_checkpoint",
    "scaled_dot_attention",
    "sinusoidal_embedding",
    "softmax",
    "stack",
    "tensor",
    "where",
]
