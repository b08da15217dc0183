"""Dense numerics substrate: parameters, tape autodiff, layers, optimiser."""

from .gradcheck import grad_check, numeric_grad
from .layers import dense, log_softmax, lstm_param_specs, lstm_step, sigmoid, softmax
from .optim import RMSProp, clip_by_global_norm, rmsprop_update
from .params import ParamVector, init_params
from .tape import Node, Tape

__all__ = [
    "ParamVector", "init_params", "Tape", "Node", "softmax", "log_softmax", "sigmoid",
    "dense", "lstm_step", "lstm_param_specs", "RMSProp", "rmsprop_update",
    "clip_by_global_norm", "grad_check", "numeric_grad",
]
