"""Minimal reverse-mode autodiff with the layers the propensity networks need."""
from .network import (Conv1D, Dense, Flatten, NetworkSpec, Reshape, conv_net, forward, init_params,
                      load_params, mlp, param_shapes, parameter_count, save_params, summary)
from .optim import SGD, Adam, make_optimizer
from .tensor import SELU_ALPHA, SELU_LAMBDA, Tensor, conv1d, selu, softplus

__all__ = [
    "Adam", "Conv1D", "Dense", "Flatten", "NetworkSpec", "Reshape", "SELU_ALPHA", "SELU_LAMBDA", "SGD",
    "Tensor", "conv1d", "conv_net", "forward", "init_params", "load_params", "make_optimizer", "mlp",
    "param_shapes", "parameter_count", "save_params", "selu", "softplus", "summary",
]
