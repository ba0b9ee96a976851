"""
Layer Module

Module base class plus the convolution layer in its three
parameterizations (plain, weight-normalized, batch-normalized).

All networks inherit from Module and implement forward().
"""

import logging
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from src.autograd import Tensor
from src.errors import ConfigError
from .functional import batch_norm_infer, batch_norm_train, conv2d, weight_norm_effective
from .params import BN_EPSILON, BN_MOMENTUM, BatchNormState, Conv2dParams, WeightNormParams

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("plain", "weight-norm", "batch-norm")


# ========== Module Base ==========

class Module:
    """
    Base class for layers, blocks and networks.

    Sub-modules are discovered from attributes (a Module or a list of
    Modules), in attribute definition order, so parameter names are stable.
    """

    def __init__(self):
        self.training = True

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError("Subclasses must implement forward()")

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def own_parameters(self) -> Dict[str, Tensor]:
        """Parameters held directly by this module (not by children)."""
        return {}

    def own_buffers(self) -> Dict[str, np.ndarray]:
        """Non-trainable state held directly by this module."""
        return {}

    def set_own_buffer(self, name: str, value: np.ndarray):
        raise KeyError(f"{type(self).__name__} has no buffer {name!r}")

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for attr, value in vars(self).items():
            if isinstance(value, Module):
                yield attr, value
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{attr}.{i}", item

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self) -> Dict[str, Tensor]:
        params = {}
        for prefix, module in self.named_modules():
            for name, tensor in module.own_parameters().items():
                params[f"{prefix}.{name}" if prefix else name] = tensor
        return params

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    def named_buffers(self) -> Dict[str, np.ndarray]:
        buffers = {}
        for prefix, module in self.named_modules():
            for name, value in module.own_buffers().items():
                buffers[f"{prefix}.{name}" if prefix else name] = value
        return buffers

    def load_buffers(self, buffers: Dict[str, np.ndarray]):
        modules = dict(self.named_modules())
        for full_name, value in buffers.items():
            prefix, name = "", full_name
            for candidate in modules:
                if candidate and full_name.startswith(candidate + ".") and len(candidate) > len(prefix):
                    prefix, name = candidate, full_name[len(candidate) + 1:]
            modules[prefix].set_own_buffer(name, value)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self):
        for _, module in self.named_modules():
            module.training = True
            module._on_mode_change()
        return self

    def eval(self):
        for _, module in self.named_modules():
            module.training = False
            module._on_mode_change()
        return self

    def _on_mode_change(self):
        pass

    def set_batch_norm(self, momentum: float, epsilon: float):
        """Apply running-stat momentum and epsilon to every BN layer below this module."""
        if not 0.0 < momentum < 1.0:
            raise ConfigError(f"bn_momentum must be in (0, 1), got {momentum}")
        if epsilon <= 0:
            raise ConfigError(f"bn_eps must be > 0, got {epsilon}")
        for _, module in self.named_modules():
            bn = getattr(module, "bn", None)
            if isinstance(bn, BatchNormState):
                bn.momentum = momentum
                bn.epsilon = epsilon
        return self

    def to_dtype(self, dtype):
        """Cast every parameter in place (used for 64-bit gradient-check shadows)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self


# ========== Initialization ==========

def init_kernel(rng: np.random.Generator, cout: int, cin: int, kh: int, kw: int) -> np.ndarray:
    """Uniform in +/- sqrt(1 / (Cin * Kh * Kw))."""
    bound = np.sqrt(1.0 / (cin * kh * kw))
    return rng.uniform(-bound, bound, size=(cout, cin, kh, kw)).astype(np.float32)


# ========== Convolution Layer ==========

class ConvLayer(Module):
    """
    Same-padded stride-1 convolution with a selectable parameterization.

    - plain:        weight, bias
    - weight-norm:  v, g, bias  (effective weight g / ||v|| * v)
    - batch-norm:   weight, bias, followed by BN over the conv output
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        normalization: str = "plain",
        rng: Optional[np.random.Generator] = None,
        bn_momentum: float = BN_MOMENTUM,
        bn_epsilon: float = BN_EPSILON,
    ):
        super().__init__()
        if normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
        if in_channels < 1 or out_channels < 1:
            raise ConfigError(f"conv channels must be >= 1, got {in_channels}->{out_channels}")
        rng = rng if rng is not None else np.random.default_rng(0)

        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.normalization = normalization
        self.last_input_hw: Optional[Tuple[int, int]] = None

        weight = init_kernel(rng, out_channels, in_channels, kernel, kernel)
        bias = np.zeros(out_channels, dtype=np.float32)
        self.bn: Optional[BatchNormState] = None
        if normalization == "weight-norm":
            self.params = WeightNormParams.from_weight(weight, bias)
        else:
            self.params = Conv2dParams(
                weight=Tensor(weight, requires_grad=True),
                bias=Tensor(bias, requires_grad=True),
            )
        if normalization == "batch-norm":
            self.bn = BatchNormState.create(out_channels, momentum=bn_momentum, epsilon=bn_epsilon)

    @property
    def weight_count(self) -> int:
        return self.out_channels * self.in_channels * self.kernel * self.kernel

    @property
    def bias_count(self) -> int:
        return self.out_channels

    @property
    def norm_count(self) -> int:
        """Extra trainable scalars of the parameterization (g, or gamma + beta)."""
        if self.normalization == "weight-norm":
            return self.out_channels
        if self.normalization == "batch-norm":
            return 2 * self.out_channels
        return 0

    def effective_weight(self) -> Tensor:
        if isinstance(self.params, WeightNormParams):
            return weight_norm_effective(self.params)
        return self.params.weight

    def forward(self, x: Tensor) -> Tensor:
        self.last_input_hw = (x.shape[2], x.shape[3])
        y = conv2d(x, Conv2dParams(self.effective_weight(), self.params.bias))
        if self.bn is not None:
            y = batch_norm_train(y, self.bn) if self.bn.mode == "train" else batch_norm_infer(y, self.bn)
        return y

    def own_parameters(self) -> Dict[str, Tensor]:
        if isinstance(self.params, WeightNormParams):
            params = {"v": self.params.v, "g": self.params.g, "bias": self.params.bias}
        else:
            params = {"weight": self.params.weight, "bias": self.params.bias}
        if self.bn is not None:
            params["bn.gamma"] = self.bn.gamma
            params["bn.beta"] = self.bn.beta
        return params

    def own_buffers(self) -> Dict[str, np.ndarray]:
        if self.bn is None or not self.bn.initialized:
            return {}
        return {"bn.running_mean": self.bn.running_mean, "bn.running_var": self.bn.running_var}

    def set_own_buffer(self, name: str, value: np.ndarray):
        if self.bn is None or name not in ("bn.running_mean", "bn.running_var"):
            super().set_own_buffer(name, value)
        value = np.asarray(value, dtype=np.float32).reshape(self.out_channels)
        setattr(self.bn, name[3:], value.copy())

    def _on_mode_change(self):
        if self.bn is not None:
            self.bn.mode = "train" if self.training else "infer"

    def __repr__(self) -> str:
        return (f"ConvLayer({self.in_channels}->{self.out_channels}, "
                f"{self.kernel}x{self.kernel}, {self.normalization})")
