from .checkpoint import load_checkpoint, load_into, load_raw, save_checkpoint, save_raw
from .nn import concat_channels, conv2d, global_avg_pool, global_max_pool, pool2d
from .ops import (
    add,
    clamp,
    concat,
    div,
    elementwise,
    exp,
    index,
    l2_norm,
    linear,
    log,
    log1p,
    masked_logsumexp,
    matmul,
    mean,
    mul,
    negate,
    power,
    relu,
    reshape,
    sigmoid,
    sqrt,
    sub,
    transpose,
)
from .ops import sum as tsum
from .optim import Optimizer, ParameterSet, optimizer_step
from .tensor import Tensor, as_tensor

__all__ = [
    "Tensor",
    "as_tensor",
    "ParameterSet",
    "Optimizer",
    "optimizer_step",
    "add",
    "sub",
    "mul",
    "div",
    "negate",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "log1p",
    "sqrt",
    "power",
    "clamp",
    "elementwise",
    "tsum",
    "mean",
    "l2_norm",
    "masked_logsumexp",
    "reshape",
    "transpose",
    "index",
    "concat",
    "matmul",
    "linear",
    "conv2d",
    "pool2d",
    "global_avg_pool",
    "global_max_pool",
    "concat_channels",
    "save_checkpoint",
    "load_checkpoint",
    "load_into",
    "save_raw",
    "load_raw",
]
