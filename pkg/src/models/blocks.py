"""
Residual Blocks

Builders for the three residual block families and the width arithmetic
that keeps them on the same parameter budget:

- vanilla: conv kxk (w1->w1) -> ReLU -> conv kxk (w1->w1)
- wdsr-a:  conv kxk (w1->r*w1) -> ReLU -> conv kxk (r*w1->w1), slim identity pathway
- wdsr-b:  conv 1x1 (w1->r*w1) -> ReLU -> conv 1x1 (r*w1->w_mid) -> conv kxk (w_mid->w1)
           (the last two form a linear low-rank convolution, no activation between them)

Every block adds its (optionally scaled) residual back onto the w1-wide input.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from src.autograd import Tensor, relu
from src.errors import ConfigError
from src.nn import NORMALIZATIONS, ConvLayer, Module

logger = logging.getLogger(__name__)

FAMILIES = ("vanilla", "wdsr-a", "wdsr-b")

# weight-parameter parity tolerance against the matched vanilla block
PARITY_TOLERANCE = 0.02
WDSR_A_ADVISED_MAX_R = 4
WDSR_B_MAX_R = 9


# ========== Block Spec ==========

@dataclass
class BlockSpec:
    """Declarative description of one residual block."""
    family: str
    w1: int
    r: int = 1
    kernel: int = 3
    normalization: str = "plain"
    residual_scale: float = 1.0
    # width of the vanilla block whose budget a wdsr-b block matches (default: w1)
    budget_width: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"block family must be one of {FAMILIES}, got {self.family!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")
        if self.w1 < 1:
            raise ConfigError(f"block width w1 must be >= 1, got {self.w1}")
        if self.r < 1:
            raise ConfigError(f"expansion factor r must be >= 1, got {self.r}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ConfigError(f"block kernel must be odd, got {self.kernel}")
        if self.family == "vanilla" and self.r != 1:
            raise ConfigError(f"vanilla blocks have no expansion; r must be 1, got {self.r}")
        if self.family == "wdsr-b" and self.r > WDSR_B_MAX_R:
            raise ConfigError(f"wdsr-b expansion r must be <= {WDSR_B_MAX_R}, got {self.r}")

    @property
    def expanded_width(self) -> int:
        """Channel count of the tensor the ReLU acts on."""
        return self.w1 * self.r

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BlockSpec":
        return cls(**data)


# ========== Width Arithmetic ==========

def warn_narrow_pathway(w1: int, scale: int) -> bool:
    """Warn when the identity pathway is narrower than the 3*S^2 shuffle input."""
    if w1 >= 3 * scale * scale:
        return False
    logger.warning(
        f"identity pathway width {w1} is below the HR representation size "
        f"3*S^2 = {3 * scale * scale}"
    )
    return True


def vanilla_block_weights(width: int, kernel: int = 3) -> int:
    """2 * w1^2 * k^2, the weight count of one vanilla block."""
    return 2 * width * width * kernel * kernel


def match_widths(w1_baseline: int, r: int, scale: Optional[int] = None) -> Tuple[int, int]:
    """
    Slim the identity pathway by sqrt(r) and widen the activation to match.

    Keeps w1^2 ~= w1_hat * w2_hat = r * w1_hat^2, so a wdsr-a block has the
    same weight budget as a vanilla block of width w1_baseline.

    Args:
        w1_baseline: Width of the vanilla block being matched
        r: Expansion factor before activation
        scale: Upscale factor; enables the warning for pathways below 3*S^2

    Returns:
        Tuple of (w1_hat, w2_hat)
    """
    if r < 1:
        raise ConfigError(f"expansion factor r must be >= 1, got {r}")
    w1_hat = int(math.floor(w1_baseline / math.sqrt(r) + 0.5))
    if w1_hat < 1:
        raise ConfigError(
            f"match_widths: w1={w1_baseline}, r={r} slims the identity pathway below 1 channel"
        )
    if scale is not None:
        warn_narrow_pathway(w1_hat, scale)
    w2_hat = r * w1_hat
    deviation = abs(w1_hat * w2_hat - w1_baseline ** 2) / w1_baseline ** 2
    if deviation > PARITY_TOLERANCE:
        logger.warning(
            f"match_widths: ({w1_hat}, {w2_hat}) is {deviation:.1%} off the budget of w1={w1_baseline}"
        )
    return w1_hat, w2_hat


def solve_low_rank_width(w1: int, r: int, kernel: int = 3, budget_width: Optional[int] = None) -> int:
    """
    Width of the 1x1 reduction inside a wdsr-b block.

    Solves  w1*(r*w1) + (r*w1)*w_mid + k^2*w_mid*w1 = 2*k^2*budget_width^2
    for w_mid, floored. When flooring leaves the block further than the
    parity tolerance under budget, the next width up is used instead.
    """
    budget_width = budget_width or w1
    target = vanilla_block_weights(budget_width, kernel)
    expand = w1 * (r * w1)
    per_channel = r * w1 + kernel * kernel * w1
    w_mid = (target - expand) // per_channel
    if w_mid < 1:
        raise ConfigError(
            f"wdsr-b: no reduction width >= 1 fits the budget of w1={budget_width} "
            f"(pathway {w1}, r={r})"
        )
    floored = expand + per_channel * w_mid
    if (target - floored) / target > PARITY_TOLERANCE:
        w_mid += 1
    return int(w_mid)


def block_weight_count(spec: BlockSpec) -> int:
    """Weights (no bias) of one block, the quantity budgets are matched on."""
    k2 = spec.kernel * spec.kernel
    if spec.family == "vanilla":
        return vanilla_block_weights(spec.w1, spec.kernel)
    if spec.family == "wdsr-a":
        return 2 * spec.w1 * spec.expanded_width * k2
    w_mid = solve_low_rank_width(spec.w1, spec.r, spec.kernel, spec.budget_width)
    return spec.w1 * spec.expanded_width + spec.expanded_width * w_mid + k2 * w_mid * spec.w1


def baseline_width(spec: BlockSpec) -> int:
    """Width of the vanilla block this block is budget-matched against."""
    if spec.budget_width:
        return spec.budget_width
    if spec.family == "wdsr-a":
        return int(math.floor(spec.w1 * math.sqrt(spec.r) + 0.5))
    return spec.w1


def block_parity(spec: BlockSpec) -> float:
    """Relative deviation of the block's weights from its matched vanilla block."""
    baseline = vanilla_block_weights(baseline_width(spec), spec.kernel)
    return block_weight_count(spec) / baseline - 1.0


# ========== Blocks ==========

class ResidualBlock(Module):
    """Base class: x + residual_scale * residual(x)."""

    family = "base"

    def __init__(self, spec: BlockSpec):
        super().__init__()
        self.spec = spec

    def residual(self, x: Tensor) -> Tensor:
        raise NotImplementedError("Subclasses must implement residual()")

    def forward(self, x: Tensor) -> Tensor:
        res = self.residual(x)
        if self.spec.residual_scale != 1.0:
            res = res * self.spec.residual_scale
        return x + res

    def convs(self) -> list:
        return [m for _, m in self.children() if isinstance(m, ConvLayer)]


class VanillaBlock(ResidualBlock):
    family = "vanilla"

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__(spec)
        w1, k, norm = spec.w1, spec.kernel, spec.normalization
        self.conv1 = ConvLayer(w1, w1, k, norm, rng)
        self.conv2 = ConvLayer(w1, w1, k, norm, rng)

    def residual(self, x: Tensor) -> Tensor:
        return self.conv2(relu(self.conv1(x)))


class WdsrABlock(ResidualBlock):
    family = "wdsr-a"

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__(spec)
        w1, w2, k, norm = spec.w1, spec.expanded_width, spec.kernel, spec.normalization
        self.conv1 = ConvLayer(w1, w2, k, norm, rng)
        self.conv2 = ConvLayer(w2, w1, k, norm, rng)

    def residual(self, x: Tensor) -> Tensor:
        return self.conv2(relu(self.conv1(x)))


class WdsrBBlock(ResidualBlock):
    family = "wdsr-b"

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__(spec)
        w1, wide, k, norm = spec.w1, spec.expanded_width, spec.kernel, spec.normalization
        self.w_mid = solve_low_rank_width(w1, spec.r, k, spec.budget_width)
        self.expand = ConvLayer(w1, wide, 1, norm, rng)
        self.reduce = ConvLayer(wide, self.w_mid, 1, norm, rng)
        self.spatial = ConvLayer(self.w_mid, w1, k, norm, rng)

    def residual(self, x: Tensor) -> Tensor:
        # no activation inside the low-rank pair
        return self.spatial(self.reduce(relu(self.expand(x))))


# ========== Builders ==========

def build_vanilla_block(spec: BlockSpec, rng: Optional[np.random.Generator] = None) -> VanillaBlock:
    if spec.family != "vanilla":
        raise ConfigError(f"build_vanilla_block needs family 'vanilla', got {spec.family!r}")
    return VanillaBlock(spec, rng if rng is not None else np.random.default_rng(0))


def build_wdsr_a_block(spec: BlockSpec, rng: Optional[np.random.Generator] = None) -> WdsrABlock:
    if spec.family != "wdsr-a":
        raise ConfigError(f"build_wdsr_a_block needs family 'wdsr-a', got {spec.family!r}")
    if spec.r > WDSR_A_ADVISED_MAX_R:
        logger.warning(
            f"wdsr-a with r={spec.r}: expansion above {WDSR_A_ADVISED_MAX_R} slims the "
            f"identity pathway and usually hurts accuracy"
        )
    return WdsrABlock(spec, rng if rng is not None else np.random.default_rng(0))


def build_wdsr_b_block(spec: BlockSpec, rng: Optional[np.random.Generator] = None) -> WdsrBBlock:
    if spec.family != "wdsr-b":
        raise ConfigError(f"build_wdsr_b_block needs family 'wdsr-b', got {spec.family!r}")
    return WdsrBBlock(spec, rng if rng is not None else np.random.default_rng(0))


BLOCK_BUILDERS = {
    'vanilla': build_vanilla_block,
    'wdsr-a': build_wdsr_a_block,
    'wdsr-b': build_wdsr_b_block,
}


def build_block(spec: BlockSpec, rng: Optional[np.random.Generator] = None) -> ResidualBlock:
    return BLOCK_BUILDERS[spec.family](spec, rng)
