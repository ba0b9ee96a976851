"""
Parameter and Mult-Add Accounting

Walks a network's conv inventory and reports, per layer, weights, bias,
normalization scalars and Mult-Adds for a declared LR input size. For
residual blocks it also reports the weight parity against the vanilla
block of the matched budget.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .blocks import PARITY_TOLERANCE, baseline_width, block_weight_count, vanilla_block_weights
from .network import NetSpec, SRNetwork, build_model

logger = logging.getLogger(__name__)


@dataclass
class LayerBudget:
    """Budget of one convolution."""
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    weights: int
    bias: int
    norm: int
    mult_adds: int
    resolution: int

    @property
    def params(self) -> int:
        return self.weights + self.bias + self.norm


@dataclass
class BudgetReport:
    """Per-layer and total accounting for one NetSpec."""
    spec: NetSpec
    input_hw: Tuple[int, int]
    layers: List[LayerBudget] = field(default_factory=list)
    block_weights: int = 0
    baseline_block_weights: int = 0
    activation_width: int = 0

    @property
    def total_weights(self) -> int:
        return sum(layer.weights for layer in self.layers)

    @property
    def total_bias(self) -> int:
        return sum(layer.bias for layer in self.layers)

    @property
    def total_norm(self) -> int:
        return sum(layer.norm for layer in self.layers)

    @property
    def total_params(self) -> int:
        return sum(layer.params for layer in self.layers)

    @property
    def total_mult_adds(self) -> int:
        return sum(layer.mult_adds for layer in self.layers)

    @property
    def parity(self) -> float:
        """Block weights relative to the matched vanilla block (0.0 = exact)."""
        return self.block_weights / self.baseline_block_weights - 1.0

    @property
    def non_lr_layers(self) -> List[str]:
        """Convolutions that do not run at LR resolution."""
        return [layer.name for layer in self.layers if layer.resolution != 1]

    def format_table(self) -> str:
        h, w = self.input_hw
        lines = [
            f"  {self.spec.topology} / {self.spec.block.family} x{self.spec.scale}, "
            f"{self.spec.n_blocks} blocks, w1={self.spec.body_width}, LR input {h}x{w}",
            "",
            f"  {'Layer':<22} {'Shape':<16} {'Weights':>10} {'Bias':>7} {'Norm':>7} {'Mult-Adds':>15} {'Res':>4}",
            f"  {'-' * 86}",
        ]
        for layer in self.layers:
            shape = f"{layer.in_channels}->{layer.out_channels} {layer.kernel}x{layer.kernel}"
            lines.append(
                f"  {layer.name:<22} {shape:<16} {layer.weights:>10,} {layer.bias:>7,} "
                f"{layer.norm:>7,} {layer.mult_adds:>15,} {layer.resolution:>3}x"
            )
        lines.append(f"  {'-' * 86}")
        lines.append(
            f"  {'TOTAL':<22} {'':<16} {self.total_weights:>10,} {self.total_bias:>7,} "
            f"{self.total_norm:>7,} {self.total_mult_adds:>15,}"
        )
        lines.append("")
        lines.append(f"  Parameters:          {self.total_params:,} ({self.total_params / 1e6:.2f}M)")
        lines.append(f"  Block weights:       {self.block_weights:,}")
        lines.append(f"  Activation width:    {self.activation_width}")
        if self.spec.block.family != "vanilla":
            lines.append(
                f"  Matched vanilla:     {self.baseline_block_weights:,} "
                f"(parity {self.parity:+.2%})"
            )
        if self.non_lr_layers:
            lines.append(f"  Non-LR convolutions: {', '.join(self.non_lr_layers)}")
        else:
            lines.append("  Non-LR convolutions: none")
        return "\n".join(lines)


def layer_budgets(model: SRNetwork, input_hw: Tuple[int, int]) -> List[LayerBudget]:
    h, w = input_hw
    budgets = []
    for name, conv, resolution in model.conv_inventory():
        pixels = (h * resolution) * (w * resolution)
        budgets.append(LayerBudget(
            name=name,
            in_channels=conv.in_channels,
            out_channels=conv.out_channels,
            kernel=conv.kernel,
            weights=conv.weight_count,
            bias=conv.bias_count,
            norm=conv.norm_count,
            mult_adds=conv.weight_count * pixels,
            resolution=resolution,
        ))
    return budgets


def budget_report(spec: NetSpec, input_hw: Tuple[int, int] = (48, 48),
                  model: Optional[SRNetwork] = None) -> BudgetReport:
    """
    Build the budget report of a network.

    Args:
        spec: Network description
        input_hw: LR input size the Mult-Adds are counted for
        model: Already-built model (built from spec with seed 0 if omitted)

    Returns:
        BudgetReport with per-layer rows and totals
    """
    model = model or build_model(spec, seed=0)
    block = spec.block
    report = BudgetReport(
        spec=spec,
        input_hw=tuple(input_hw),
        layers=layer_budgets(model, input_hw),
        block_weights=block_weight_count(block),
        baseline_block_weights=vanilla_block_weights(baseline_width(block), block.kernel),
        activation_width=block.expanded_width,
    )
    if abs(report.parity) > PARITY_TOLERANCE:
        logger.warning(f"block weights are {report.parity:+.2%} off the matched vanilla budget")
    return report


def audit_resolution(model: SRNetwork) -> List[str]:
    """Static check: names of convolutions that run above LR resolution."""
    return [name for name, _, resolution in model.conv_inventory() if resolution != 1]
