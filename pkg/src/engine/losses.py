"""
Training loss and the evaluation metric.
"""

import math

import numpy as np

from src.autograd import Tensor, absolute, mean, sub
from src.errors import ConfigError, DimensionError

PSNR_PEAK = 255.0
LAYOUTS = ("chw", "hwc")


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over all elements (subgradient 0 where pred == target)."""
    if pred.shape != target.shape:
        raise DimensionError(f"l1_loss: shape mismatch: {pred.shape} vs {target.shape}")
    return mean(absolute(sub(pred, target)))


def quantize(image: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] and round, the way outputs are scored and saved."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0.0, PSNR_PEAK)


def psnr_rgb(pred: np.ndarray, target: np.ndarray, shave: int = 0, layout: str = "chw") -> float:
    """
    PSNR over all RGB samples.

    Both images are clipped to [0, 255] and rounded first.

    Args:
        pred: Predicted image
        target: Reference image
        shave: Border pixels dropped on every side before scoring
        layout: "chw" (spatial axes last) or "hwc" (channels last)

    Returns:
        Decibels, or math.inf when the quantized images are identical
    """
    if layout not in LAYOUTS:
        raise ConfigError(f"psnr_rgb: layout must be one of {LAYOUTS}, got {layout!r}")
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"psnr_rgb: shape mismatch: {pred.shape} vs {target.shape}")
    if shave:
        border = (slice(shave, -shave), slice(shave, -shave))
        index = (Ellipsis, *border) if layout == "chw" else (Ellipsis, *border, slice(None))
        pred, target = pred[index], target[index]
        if pred.size == 0:
            raise DimensionError(f"psnr_rgb: shave={shave} leaves no pixels")
    mse = float(np.mean((quantize(pred) - quantize(target)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PSNR_PEAK ** 2 / mse)


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"
