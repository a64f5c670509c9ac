from .functional import (
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    conv_output_size,
    maxpool2,
    maxpool2_backward,
    mse_loss,
    relu,
    relu_grad,
    softmax,
    softmax_ce_loss,
    tconv2d_backward,
    tconv2d_forward,
    tconv_output_size,
)
from .gradcheck import grad_check, numerical_grad, relative_error
from .optim import AdamState, adam_step, xavier_bound, xavier_init

__all__ = [
    "AdamState", "ConvParams", "adam_step", "conv2d_backward", "conv2d_forward",
    "conv_output_size", "grad_check", "maxpool2", "maxpool2_backward", "mse_loss",
    "numerical_grad", "relative_error", "relu", "relu_grad", "softmax", "softmax_ce_loss",
    "tconv2d_backward", "tconv2d_forward", "tconv_output_size", "xavier_bound", "xavier_init",
]
