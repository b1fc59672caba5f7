"""Minimal reverse-mode autodiff engine on numpy."""

from .checkpoint import load, save
from .conv import conv2d, conv_transpose2d, maxpool2d, upsample_nearest2d
from .core import (
    Tape,
    Tensor,
    abs_,
    add,
    backward,
    broadcast_to,
    concat,
    div,
    grad_enabled,
    l1_loss,
    leaky_relu,
    matmul,
    mean,
    mse_loss,
    mul,
    no_grad,
    record_branches,
    relu,
    reshape,
    sigmoid,
    slice_,
    square,
    sub,
    sum_,
    take_rows,
    tanh,
    transpose,
)
from .gradcheck import grad_check
from .optim import Adam, AdamState, adam_step
from .rng import stream

__all__ = [
    "Adam", "AdamState", "Tape", "Tensor", "abs_", "adam_step", "add", "backward", "broadcast_to",
    "concat", "conv2d", "conv_transpose2d", "div", "grad_check", "grad_enabled", "l1_loss",
    "leaky_relu", "load", "matmul", "maxpool2d", "mean", "mse_loss", "mul", "no_grad", "record_branches", "relu",
    "reshape", "save", "sigmoid", "slice_", "square", "stream", "sub", "sum_", "take_rows", "tanh",
    "transpose", "upsample_nearest2d",
]
