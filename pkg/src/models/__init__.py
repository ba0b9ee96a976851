"""
Models Package

Contains the residual block families, the two network topologies and the
parameter / Mult-Add budget accounting.

Modules:
- blocks: vanilla, wdsr-a and wdsr-b residual blocks plus width matching
- network: WDSR and EDSR-baseline networks
- budget: per-layer parameter and Mult-Add reports
"""

from .blocks import (
    FAMILIES,
    PARITY_TOLERANCE,
    BlockSpec,
    ResidualBlock,
    block_parity,
    block_weight_count,
    build_block,
    build_vanilla_block,
    build_wdsr_a_block,
    build_wdsr_b_block,
    match_widths,
    solve_low_rank_width,
    vanilla_block_weights,
    warn_narrow_pathway,
)
from .budget import BudgetReport, LayerBudget, audit_resolution, budget_report
from .network import (
    DIV2K_RGB_MEAN,
    SCALES,
    TOPOLOGIES,
    EdsrBaseline,
    NetSpec,
    SRNetwork,
    WdsrNet,
    build_edsr_baseline,
    build_model,
    build_wdsr_net,
)

__all__ = [
    'FAMILIES',
    'PARITY_TOLERANCE',
    'BlockSpec',
    'ResidualBlock',
    'block_parity',
    'block_weight_count',
    'build_block',
    'build_vanilla_block',
    'build_wdsr_a_block',
    'build_wdsr_b_block',
    'match_widths',
    'solve_low_rank_width',
    'vanilla_block_weights',
    'warn_narrow_pathway',
    'BudgetReport',
    'LayerBudget',
    'audit_resolution',
    'budget_report',
    'DIV2K_RGB_MEAN',
    'SCALES',
    'TOPOLOGIES',
    'EdsrBaseline',
    'NetSpec',
    'SRNetwork',
    'WdsrNet',
    'build_edsr_baseline',
    'build_model',
    'build_wdsr_net',
]
