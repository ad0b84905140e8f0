"""Tensors, differentiable kernels and gradient verification."""

from .gradcheck import check_gradients, numerical_gradient, relative_error
from .kernels import (
    concat,
    cosine_similarity,
    cross_entropy,
    embedding,
    fusion_attend,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    mean_pool,
    multi_head_attention,
    relu,
    softmax,
    stack,
    tanh,
)
from .optim import Adam
from .tensor import ComputationTape, Tensor, as_tensor, backward, get_tape, no_grad

__all__ = [
    "Adam", "ComputationTape", "Tensor", "as_tensor", "backward", "check_gradients", "concat",
    "cosine_similarity", "cross_entropy", "embedding", "fusion_attend", "get_tape", "layer_norm",
    "linear", "log_softmax", "matmul", "mean_pool", "multi_head_attention", "no_grad",
    "numerical_gradient", "relative_error", "relu", "softmax", "stack", "tanh",
]
