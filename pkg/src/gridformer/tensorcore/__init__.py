from .tensor import Tensor, Tape, active_tape, as_tensor, get_default_dtype, set_default_dtype
from .ops import (
    FeatureGrid,
    add,
    clamp,
    conv3,
    gather_rows,
    grid_interpolate,
    group_softmax,
    linear,
    log,
    mul,
    pointwise,
    relu,
    resample_grid,
    reshape,
    hstack,
    scale,
    scatter_reduce,
    sigmoid,
    sub,
    tmean,
    tsum,
)
from .gradcheck import gradcheck

__all__ = [
    "Tensor", "Tape", "active_tape", "as_tensor",
    "get_default_dtype", "set_default_dtype",
    "FeatureGrid", "add", "clamp", "conv3", "gather_rows", "grid_interpolate",
    "group_softmax", "linear", "log", "mul", "pointwise", "relu",
    "resample_grid", "reshape", "hstack", "scale", "scatter_reduce",
    "sigmoid", "sub",
    "tmean", "tsum", "gradcheck",
]
