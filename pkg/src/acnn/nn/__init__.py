"""Minimal deterministic layer engine (numpy, layer-wise backward)."""

from .functional import (
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward,
    batchnorm_infer, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    loss_mse, loss_softmax_xent, lrn_backward, lrn_forward, maxpool2_backward,
    maxpool2_forward,
)
from .gradcheck import grad_check, grad_errors, rel_error
from .layers import (
    LRN, Activation, BatchNorm2d, Conv2d, Dense, Flatten, Layer, MaxPool2, Param, Sequential,
)
from .optim import AdamConfig, adam_step

__all__ = [
    "LRN", "Activation", "AdamConfig", "BatchNorm2d", "Conv2d", "Dense", "Flatten", "Layer",
    "MaxPool2", "Param", "Sequential", "activation_backward", "activation_forward", "adam_step",
    "batchnorm_backward", "batchnorm_forward", "batchnorm_infer", "conv2d_backward",
    "conv2d_forward", "dense_backward", "dense_forward", "grad_check", "grad_errors",
    "loss_mse", "loss_softmax_xent", "lrn_backward", "lrn_forward", "maxpool2_backward",
    "maxpool2_forward", "rel_error",
]
