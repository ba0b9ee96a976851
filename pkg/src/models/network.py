"""
Super-Resolution Networks

- WdsrNet: mean-subtracted LR input feeds two parallel paths that both end
  in a pixel shuffle; every convolution runs at LR resolution.
    body: conv 3x3 (3->w1) -> residual blocks -> conv 3x3 (w1->3S^2) -> shuffle
    skip: conv 5x5 (3->3S^2) -> shuffle
- EdsrBaseline: head conv, vanilla blocks, body-end conv with a long skip,
  conv+shuffle upsampler (two x2 stages for S=4), tail conv at HR.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.autograd import Tensor
from src.errors import ConfigError
from src.nn import ConvLayer, Module, pixel_shuffle
from .blocks import BlockSpec, build_block, warn_narrow_pathway

logger = logging.getLogger(__name__)

TOPOLOGIES = ("wdsr", "edsr-baseline")
SCALES = (2, 3, 4)

# DIV2K training-set mean, used until a prepared dataset supplies its own
DIV2K_RGB_MEAN = (114.444, 111.4605, 103.02)


# ========== Net Spec ==========

@dataclass
class NetSpec:
    """Declarative description of a full network."""
    topology: str
    scale: int
    n_blocks: int
    block: BlockSpec
    rgb_mean: Tuple[float, float, float] = field(default=DIV2K_RGB_MEAN)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale}")
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.topology == "edsr-baseline" and self.block.family != "vanilla":
            raise ConfigError(f"edsr-baseline uses vanilla blocks, got {self.block.family!r}")
        self.rgb_mean = tuple(float(m) for m in self.rgb_mean)
        if len(self.rgb_mean) != 3:
            raise ConfigError(f"rgb_mean needs 3 values, got {self.rgb_mean}")

    @property
    def body_width(self) -> int:
        return self.block.w1

    @property
    def edge_normalization(self) -> str:
        """Parameterization of head/tail/skip/upsampler convs (BN stays inside blocks)."""
        return "weight-norm" if self.block.normalization == "weight-norm" else "plain"

    def to_dict(self) -> dict:
        return {
            'topology': self.topology,
            'scale': self.scale,
            'n_blocks': self.n_blocks,
            'block': self.block.to_dict(),
            'rgb_mean': list(self.rgb_mean),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetSpec":
        return cls(
            topology=data['topology'],
            scale=int(data['scale']),
            n_blocks=int(data['n_blocks']),
            block=BlockSpec.from_dict(data['block']),
            rgb_mean=tuple(data.get('rgb_mean', DIV2K_RGB_MEAN)),
        )


def _mean_tensor(spec: NetSpec) -> Tensor:
    return Tensor(np.asarray(spec.rgb_mean))


# ========== Networks ==========

class SRNetwork(Module):
    """Common base: spec, seeded init, conv inventory at a given resolution."""

    def __init__(self, spec: NetSpec):
        super().__init__()
        self.spec = spec
        self.rgb_mean = _mean_tensor(spec)

    def conv_inventory(self) -> list:
        """
        Every conv in forward order with its spatial resolution relative to
        the LR input (1 = LR).

        Returns:
            List of (name, ConvLayer, resolution)
        """
        raise NotImplementedError("Subclasses must implement conv_inventory()")


class WdsrNet(SRNetwork):

    def __init__(self, spec: NetSpec, rng: np.random.Generator):
        super().__init__(spec)
        s2 = spec.scale * spec.scale
        w1 = spec.body_width
        edge = spec.edge_normalization
        self.head = ConvLayer(3, w1, 3, edge, rng)
        self.blocks = [build_block(spec.block, rng) for _ in range(spec.n_blocks)]
        self.tail = ConvLayer(w1, 3 * s2, 3, edge, rng)
        self.skip = ConvLayer(3, 3 * s2, 5, edge, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x - self.rgb_mean
        body = self.head(x)
        for block in self.blocks:
            body = block(body)
        body = pixel_shuffle(self.tail(body), self.spec.scale)
        skip = pixel_shuffle(self.skip(x), self.spec.scale)
        return body + skip + self.rgb_mean

    def conv_inventory(self) -> list:
        inventory = [('head', self.head, 1)]
        for i, block in enumerate(self.blocks):
            for name, conv in block.children():
                inventory.append((f"blocks.{i}.{name}", conv, 1))
        inventory.append(('tail', self.tail, 1))
        inventory.append(('skip', self.skip, 1))
        return inventory


def upsample_stages(scale: int) -> list:
    """Pixel-shuffle factors of the EDSR upsampler."""
    return [2, 2] if scale == 4 else [scale]


class EdsrBaseline(SRNetwork):

    def __init__(self, spec: NetSpec, rng: np.random.Generator):
        super().__init__(spec)
        w1 = spec.body_width
        edge = spec.edge_normalization
        self.stages = upsample_stages(spec.scale)
        self.head = ConvLayer(3, w1, 3, edge, rng)
        self.blocks = [build_block(spec.block, rng) for _ in range(spec.n_blocks)]
        self.body_end = ConvLayer(w1, w1, 3, edge, rng)
        self.upsampler = [ConvLayer(w1, w1 * s * s, 3, edge, rng) for s in self.stages]
        self.tail = ConvLayer(w1, 3, 3, edge, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x - self.rgb_mean
        head = self.head(x)
        body = head
        for block in self.blocks:
            body = block(body)
        body = self.body_end(body) + head
        for conv, s in zip(self.upsampler, self.stages):
            body = pixel_shuffle(conv(body), s)
        return self.tail(body) + self.rgb_mean

    def conv_inventory(self) -> list:
        inventory = [('head', self.head, 1)]
        for i, block in enumerate(self.blocks):
            for name, conv in block.children():
                inventory.append((f"blocks.{i}.{name}", conv, 1))
        inventory.append(('body_end', self.body_end, 1))
        resolution = 1
        for i, (conv, s) in enumerate(zip(self.upsampler, self.stages)):
            inventory.append((f"upsampler.{i}", conv, resolution))
            resolution *= s
        inventory.append(('tail', self.tail, resolution))
        return inventory


# ========== Builders ==========

def build_wdsr_net(spec: NetSpec, seed: int = 0) -> WdsrNet:
    if spec.topology != "wdsr":
        raise ConfigError(f"build_wdsr_net needs topology 'wdsr', got {spec.topology!r}")
    warn_narrow_pathway(spec.body_width, spec.scale)
    return WdsrNet(spec, np.random.default_rng(seed))


def build_edsr_baseline(spec: NetSpec, seed: int = 0) -> EdsrBaseline:
    if spec.topology != "edsr-baseline":
        raise ConfigError(f"build_edsr_baseline needs topology 'edsr-baseline', got {spec.topology!r}")
    return EdsrBaseline(spec, np.random.default_rng(seed))


NETWORK_BUILDERS = {
    'wdsr': build_wdsr_net,
    'edsr-baseline': build_edsr_baseline,
}


def build_model(spec: NetSpec, seed: int = 0) -> SRNetwork:
    model = NETWORK_BUILDERS[spec.topology](spec, seed)
    logger.debug(f"built {spec.topology} x{spec.scale}: {model.parameter_count():,} parameters")
    return model
