"""
Parameter containers for the three convolution parameterizations.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.autograd import Tensor
from src.errors import DimensionError, ModeError

ALLOWED_KERNELS = (1, 3, 5)

BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5


def _check_kernel(weight_shape: tuple, what: str):
    if len(weight_shape) != 4:
        raise DimensionError(f"{what} must be (Cout, Cin, Kh, Kw), got {weight_shape}")
    kh, kw = weight_shape[2], weight_shape[3]
    if kh not in ALLOWED_KERNELS or kw not in ALLOWED_KERNELS:
        raise DimensionError(f"{what} kernel {kh}x{kw} not in {ALLOWED_KERNELS}")


def _check_vector(t: Tensor, length: int, what: str):
    if t.shape != (length,):
        raise DimensionError(f"{what} must have shape ({length},), got {t.shape}")


@dataclass
class Conv2dParams:
    """Plain convolution: y = w * x + b, stride 1, same padding."""
    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        _check_kernel(self.weight.shape, "conv weight")
        _check_vector(self.bias, self.weight.shape[0], "conv bias")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def padding(self) -> tuple:
        return (self.weight.shape[2] - 1) // 2, (self.weight.shape[3] - 1) // 2


@dataclass
class WeightNormParams:
    """
    Weight-normalized convolution.

    The effective kernel per output channel is w_c = (g_c / ||v_c||) * v_c,
    the norm taken over the channel's whole Cin*Kh*Kw receptive volume.
    """
    v: Tensor
    g: Tensor
    bias: Tensor

    def __post_init__(self):
        _check_kernel(self.v.shape, "weight-norm direction v")
        _check_vector(self.g, self.v.shape[0], "weight-norm length g")
        _check_vector(self.bias, self.v.shape[0], "conv bias")

    @classmethod
    def from_weight(cls, weight: np.ndarray, bias: np.ndarray) -> "WeightNormParams":
        """Reparameterize a plain kernel so the effective weight starts equal to it."""
        cout = weight.shape[0]
        norms = np.sqrt(np.square(weight.astype(np.float64)).reshape(cout, -1).sum(axis=1))
        return cls(
            v=Tensor(weight, requires_grad=True, dtype=weight.dtype),
            g=Tensor(norms, requires_grad=True, dtype=weight.dtype),
            bias=Tensor(bias, requires_grad=True, dtype=bias.dtype),
        )


@dataclass
class BatchNormState:
    """
    Per-channel batch normalization state.

    running_mean / running_var stay None until a training batch (or a
    checkpoint) sets them; inference before that is an error.
    """
    gamma: Tensor
    beta: Tensor
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON
    mode: str = "train"

    def __post_init__(self):
        channels = self.gamma.shape[0] if self.gamma.ndim == 1 else -1
        _check_vector(self.gamma, channels, "bn gamma")
        _check_vector(self.beta, channels, "bn beta")
        if not 0.0 < self.momentum < 1.0:
            raise ModeError(f"bn momentum must be in (0, 1), got {self.momentum}")
        if self.epsilon <= 0:
            raise ModeError(f"bn epsilon must be > 0, got {self.epsilon}")
        if self.mode not in ("train", "infer"):
            raise ModeError(f"bn mode must be 'train' or 'infer', got {self.mode!r}")

    @classmethod
    def create(cls, channels: int, momentum: float = BN_MOMENTUM,
               epsilon: float = BN_EPSILON, dtype=np.float32) -> "BatchNormState":
        return cls(
            gamma=Tensor(np.ones(channels), requires_grad=True, dtype=dtype),
            beta=Tensor(np.zeros(channels), requires_grad=True, dtype=dtype),
            momentum=momentum,
            epsilon=epsilon,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @property
    def initialized(self) -> bool:
        return self.running_mean is not None and self.running_var is not None
