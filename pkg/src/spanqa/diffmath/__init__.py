"""Reverse-mode differentiation engine plus the recurrent kernels built on it."""

from .tensor import (
    Tensor,
    add,
    backward,
    clip_min,
    concat_cols,
    dropout,
    flip_rows,
    gather_rows,
    grad_enabled,
    group_max_rows,
    log,
    matmul,
    max_axis1,
    maximum,
    mul,
    neg,
    no_grad,
    pick,
    relu,
    reshape,
    row_softmax,
    stack_scalars,
    sub,
    tile_rows,
    transpose,
    tsum,
)
from .rnn import BiGruParams, GruParams, bigru, gru_sequence, init_bigru_params, init_gru_params
from .optim import ParameterStore, adadelta_step, glorot_uniform
from .rng import make_rng

__all__ = [
    "Tensor",
    "add",
    "backward",
    "clip_min",
    "concat_cols",
    "dropout",
    "flip_rows",
    "gather_rows",
    "grad_enabled",
    "group_max_rows",
    "log",
    "matmul",
    "max_axis1",
    "maximum",
    "mul",
    "neg",
    "no_grad",
    "pick",
    "relu",
    "reshape",
    "row_softmax",
    "stack_scalars",
    "sub",
    "tile_rows",
    "transpose",
    "tsum",
    "BiGruParams",
    "GruParams",
    "bigru",
    "gru_sequence",
    "init_bigru_params",
    "init_gru_params",
    "ParameterStore",
    "adadelta_step",
    "glorot_uniform",
    "make_rng",
]
