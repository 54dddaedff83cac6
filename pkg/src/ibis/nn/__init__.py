from ibis.nn.autograd import GradTape, Tensor, backward, current_tape, no_grad, tape_scope
from ibis.nn.layers import (
    activation,
    additive_attention,
    batchnorm,
    bilstm,
    concat,
    conv2d,
    cross_entropy,
    dense,
    dropout,
    global_avg_pool_1d,
    lstm_direction,
    maxpool2d,
    softmax,
)
from ibis.nn.optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "GradTape",
    "Tensor",
    "activation",
    "adam_step",
    "additive_attention",
    "backward",
    "batchnorm",
    "bilstm",
    "concat",
    "conv2d",
    "cross_entropy",
    "current_tape",
    "dense",
    "dropout",
    "global_avg_pool_1d",
    "lstm_direction",
    "maxpool2d",
    "no_grad",
    "softmax",
    "tape_scope",
]
