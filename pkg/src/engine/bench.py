"""
Inference speed of WDSR against EDSR-baseline at equal blocks and width,
plus the static resolution audit of both.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from src.autograd import Tensor, no_grad
from src.models import BlockSpec, NetSpec, audit_resolution, build_model

logger = logging.getLogger(__name__)


@dataclass
class BenchResult:
    width: int
    n_blocks: int
    scale: int
    input_hw: Tuple[int, int]
    wdsr_seconds: float
    edsr_seconds: float
    wdsr_non_lr: List[str] = field(default_factory=list)
    edsr_non_lr: List[str] = field(default_factory=list)

    @property
    def speedup(self) -> float:
        return self.edsr_seconds / self.wdsr_seconds

    def format_table(self) -> str:
        h, w = self.input_hw
        lines = [
            f"  {self.n_blocks} blocks, width {self.width}, x{self.scale}, LR input {h}x{w}",
            f"  {'Network':<16} {'Median (ms)':>12}  Convs above LR resolution",
            f"  {'-' * 60}",
            f"  {'wdsr':<16} {self.wdsr_seconds * 1e3:>12.1f}  {', '.join(self.wdsr_non_lr) or 'none'}",
            f"  {'edsr-baseline':<16} {self.edsr_seconds * 1e3:>12.1f}  {', '.join(self.edsr_non_lr) or 'none'}",
            "",
            f"  WDSR speedup: {self.speedup:.2f}x",
        ]
        return "\n".join(lines)


def time_inference(model, x: np.ndarray, repeats: int) -> float:
    """Median wall-clock seconds of one forward pass (after one warm-up)."""
    model.eval()
    inp = Tensor(x)
    timings = []
    with no_grad():
        model(inp)
        for _ in range(repeats):
            started = time.perf_counter()
            model(inp)
            timings.append(time.perf_counter() - started)
    return float(np.median(timings))


def bench_topologies(width: int = 64, n_blocks: int = 8, scale: int = 2,
                     input_hw: Tuple[int, int] = (48, 48), repeats: int = 5, seed: int = 0) -> BenchResult:
    """Vanilla blocks in both topologies so only the layout differs."""
    block = BlockSpec(family="vanilla", w1=width)
    wdsr = build_model(NetSpec("wdsr", scale, n_blocks, block), seed=seed)
    edsr = build_model(NetSpec("edsr-baseline", scale, n_blocks, block), seed=seed)
    x = np.random.default_rng(seed).uniform(0.0, 255.0, (1, 3, *input_hw)).astype(np.float32)
    result = BenchResult(
        width=width,
        n_blocks=n_blocks,
        scale=scale,
        input_hw=tuple(input_hw),
        wdsr_seconds=time_inference(wdsr, x, repeats),
        edsr_seconds=time_inference(edsr, x, repeats),
        wdsr_non_lr=audit_resolution(wdsr),
        edsr_non_lr=audit_resolution(edsr),
    )
    logger.info(f"bench: wdsr {result.wdsr_seconds * 1e3:.1f} ms, edsr {result.edsr_seconds * 1e3:.1f} ms")
    return result
