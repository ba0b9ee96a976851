"""
Neural Operator Package

- functional: conv2d, pixel (un)shuffle, weight/batch normalization ops
- params: parameter containers for each parameterization
- layers: Module base class and ConvLayer
"""

from .functional import (
    batch_norm_infer,
    batch_norm_train,
    conv2d,
    pixel_shuffle,
    pixel_unshuffle,
    weight_norm_effective,
)
from .layers import NORMALIZATIONS, ConvLayer, Module, init_kernel
from .params import BatchNormState, Conv2dParams, WeightNormParams

__all__ = [
    'batch_norm_infer',
    'batch_norm_train',
    'conv2d',
    'pixel_shuffle',
    'pixel_unshuffle',
    'weight_norm_effective',
    'NORMALIZATIONS',
    'ConvLayer',
    'Module',
    'init_kernel',
    'BatchNormState',
    'Conv2dParams',
    'WeightNormParams',
]
