"""Minimal tensor engine: tape-based reverse-mode autodiff, a handful of
dense/conv/attention primitives, SGD/Adam, and a bit-exact checkpoint format."""

from .checkpoint import (
    MAGIC,
    VERSION,
    BadMagic,
    CorruptManifest,
    VersionMismatch,
    load_checkpoint,
    save_checkpoint,
)
from .ops import (
    attention,
    conv2d,
    cross_entropy,
    dropout,
    embedding,
    global_avg_pool,
    layer_norm,
    log_softmax_np,
    maxpool2,
    softmax,
)
from .optim import SGD, Adam, MissingGradient, zero_grads
from .tensor import (
    NonScalarLoss,
    ShapeMismatch,
    Tape,
    Tensor,
    add,
    as_tensor,
    matmul,
    mul,
    relu,
    reshape,
    scale,
    sub,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "MAGIC", "VERSION", "BadMagic", "CorruptManifest", "VersionMismatch",
    "load_checkpoint", "save_checkpoint",
    "attention", "conv2d", "cross_entropy", "dropout", "embedding",
    "global_avg_pool", "layer_norm", "log_softmax_np", "maxpool2", "softmax",
    "SGD", "Adam", "MissingGradient", "zero_grads",
    "NonScalarLoss", "ShapeMismatch", "Tape", "Tensor",
    "add", "as_tensor", "matmul", "mul", "relu", "reshape", "scale", "sub",
    "tmean", "transpose", "tsum",
]
