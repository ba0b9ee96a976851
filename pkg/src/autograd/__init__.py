"""
Autograd Package

Dense tensor type and the reverse-mode differentiation machinery.
"""

from .tensor import (
    DEFAULT_DTYPE,
    Graph,
    Tensor,
    absolute,
    add,
    backward,
    is_grad_enabled,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    sub,
    total,
)

__all__ = [
    'DEFAULT_DTYPE',
    'Graph',
    'Tensor',
    'absolute',
    'add',
    'backward',
    'is_grad_enabled',
    'mean',
    'mul',
    'neg',
    'no_grad',
    'relu',
    'sub',
    'total',
]
