"""最小反向模式自动微分：Node 计算图、参数仓库、MLP、AdamW、梯度检查。"""

from .engine import (
    Node,
    concat,
    constant,
    exp,
    leaf,
    log,
    log_sigmoid,
    matmul,
    mean,
    sigmoid,
    silu,
    sq_norm,
    square,
    stop_gradient,
    sum_,
    take_rows,
    tanh,
)
from .gradcheck import GradCheckReport, grad_check
from .nn import MLP, Affine
from .optim import AdamW
from .params import ParamStore

__all__ = [
    "MLP",
    "AdamW",
    "Affine",
    "GradCheckReport",
    "Node",
    "ParamStore",
    "concat",
    "constant",
    "exp",
    "grad_check",
    "leaf",
    "log",
    "log_sigmoid",
    "matmul",
    "mean",
    "sigmoid",
    "silu",
    "sq_norm",
    "square",
    "stop_gradient",
    "sum_",
    "take_rows",
    "tanh",
]
