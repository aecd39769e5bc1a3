from .optim import AdamW, OptimizerConfig, adamw_step, step_decay_lr
from .tensor import (
    LOG_FLOOR,
    Parameter,
    Tensor,
    add,
    as_tensor,
    backward,
    concat_cols,
    edge_aggregate,
    elementwise,
    exp,
    gather_rows,
    index_2d,
    instance_norm_rows,
    l2_normalize_rows,
    log,
    log_softmax_cols,
    log_softmax_rows,
    matmul,
    reciprocal,
    mean_all,
    mul,
    no_grad,
    reduce_neighborhood,
    relu,
    reshape,
    row_norms,
    scatter_matrix,
    scale,
    sigmoid,
    softmax_cols,
    softmax_rows,
    sub,
    sum_all,
    sum_rows,
    transpose,
)

__all__ = [
    "AdamW",
    "LOG_FLOOR",
    "OptimizerConfig",
    "Parameter",
    "Tensor",
    "adamw_step",
    "add",
    "as_tensor",
    "backward",
    "concat_cols",
    "edge_aggregate",
    "elementwise",
    "exp",
    "gather_rows",
    "index_2d",
    "instance_norm_rows",
    "l2_normalize_rows",
    "log",
    "log_softmax_cols",
    "log_softmax_rows",
    "matmul",
    "mean_all",
    "mul",
    "no_grad",
    "reciprocal",
    "reduce_neighborhood",
    "relu",
    "reshape",
    "row_norms",
    "scatter_matrix",
    "scale",
    "sigmoid",
    "softmax_cols",
    "softmax_rows",
    "step_decay_lr",
    "sub",
    "sum_all",
    "sum_rows",
    "transpose",
]
