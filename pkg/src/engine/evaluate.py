"""
PSNR Evaluation

Scores a network on every pair of a dataset next to the bicubic-upsampling
baseline of the same LR input. Runs in eval mode under no_grad, so BN layers
read their running statistics and never update them.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.autograd import Tensor, no_grad
from src.data import ImageBuf, SRDataset, bicubic_upsample
from .losses import format_psnr, psnr_rgb, quantize

logger = logging.getLogger(__name__)


@dataclass
class ImageScore:
    name: str
    psnr_model: float
    psnr_bicubic: float

    @property
    def gain(self) -> float:
        return self.psnr_model - self.psnr_bicubic


@dataclass
class EvalReport:
    rows: List[ImageScore] = field(default_factory=list)

    @property
    def mean_model(self) -> float:
        return _mean([r.psnr_model for r in self.rows])

    @property
    def mean_bicubic(self) -> float:
        return _mean([r.psnr_bicubic for r in self.rows])

    def format_table(self) -> str:
        lines = [f"  {'Image':<24} {'Model (dB)':>11} {'Bicubic (dB)':>13} {'Gain':>7}", f"  {'-' * 58}"]
        for r in self.rows:
            gain = "" if math.isinf(r.psnr_model) or math.isinf(r.psnr_bicubic) else f"{r.gain:+.2f}"
            lines.append(
                f"  {r.name:<24} {format_psnr(r.psnr_model):>11} {format_psnr(r.psnr_bicubic):>13} {gain:>7}"
            )
        lines.append(f"  {'-' * 58}")
        mean_gain = self.mean_model - self.mean_bicubic
        gain = "" if math.isinf(mean_gain) or math.isnan(mean_gain) else f"{mean_gain:+.2f}"
        lines.append(
            f"  {'MEAN':<24} {format_psnr(self.mean_model):>11} {format_psnr(self.mean_bicubic):>13} {gain:>7}"
        )
        return "\n".join(lines)

    def to_rows(self) -> List[dict]:
        return [
            {'image': r.name, 'psnr_model': format_psnr(r.psnr_model), 'psnr_bicubic': format_psnr(r.psnr_bicubic)}
            for r in self.rows
        ]


def _mean(values: List[float]) -> float:
    if not values:
        return math.nan
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(np.mean(values))


def center_crop_pair(hr: ImageBuf, lr: ImageBuf, scale: int, crop: Optional[int]):
    """Center crop of crop x crop LR pixels and the matching HR region (no-op when crop is falsy)."""
    if not crop or (lr.height <= crop and lr.width <= crop):
        return hr, lr
    ch, cw = min(crop, lr.height), min(crop, lr.width)
    top, left = (lr.height - ch) // 2, (lr.width - cw) // 2
    return hr.crop(top * scale, left * scale, ch * scale, cw * scale), lr.crop(top, left, ch, cw)


def predict(model, lr: ImageBuf) -> np.ndarray:
    """Run the model on one LR image; returns float (3, H*S, W*S) in the 0-255 domain."""
    with no_grad():
        out = model(Tensor(lr.to_chw()[None]))
    return out.data[0]


def super_resolve(model, lr: ImageBuf) -> ImageBuf:
    return ImageBuf(quantize(predict(model, lr)).transpose(1, 2, 0).astype(np.uint8))


def evaluate_model(model, dataset: SRDataset, shave: int = 0, crop: Optional[int] = None) -> EvalReport:
    """
    Per-image model and bicubic PSNR.

    Args:
        model: Trained network (switched to eval mode; previous mode restored)
        dataset: Pairs to score
        shave: Border pixels ignored on each side
        crop: Optional LR center-crop size to bound the cost

    Returns:
        EvalReport in dataset order
    """
    was_training = model.training
    model.eval()
    report = EvalReport()
    try:
        for name, (hr, lr) in zip(dataset.names, dataset.pairs):
            hr, lr = center_crop_pair(hr, lr, dataset.scale, crop)
            target = hr.to_chw()
            pred = predict(model, lr)
            baseline = bicubic_upsample(lr, dataset.scale).to_chw()
            report.rows.append(ImageScore(
                name=name,
                psnr_model=psnr_rgb(pred, target, shave, layout="chw"),
                psnr_bicubic=psnr_rgb(baseline, target, shave, layout="chw"),
            ))
    finally:
        if was_training:
            model.train()
    logger.debug(f"Evaluated {len(report.rows)} images: model {format_psnr(report.mean_model)} dB")
    return report
