"""Deterministic dense tensors, reverse-mode autodiff, layers and Adam."""
from .core import (
    GradientTape,
    NonFiniteError,
    Tensor,
    UsageError,
    backward,
    concatenate,
    debug_mode,
    default_dtype,
    enable_grad,
    erf,
    exp,
    get_default_dtype,
    grad,
    is_grad_enabled,
    log,
    matmul,
    mean,
    no_grad,
    reshape,
    set_default_dtype,
    sigmoid,
    split,
    sqrt,
    stack,
    sum_,
    tanh,
    tensor,
    transpose,
    var,
)
from .functional import (
    batch_norm,
    conv2d,
    deconv2d,
    dropout,
    gelu,
    layer_norm,
    leaky_relu,
    linear,
    softmax,
)
from .optim import Adam, AdamState, adam_step
from .gradcheck import gradcheck, numerical_grad

__all__ = [name for name in dir() if not name.startswith("_")]
