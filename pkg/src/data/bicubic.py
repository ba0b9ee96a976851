"""
Bicubic Resampling

Separable cubic convolution with a = -0.5, half-pixel-centered coordinate
mapping and edge replication. When shrinking, the kernel is stretched by
the scale factor (antialiasing), the same construction MATLAB's imresize
uses. Each axis becomes one dense (out, in) weight matrix whose rows sum
to one.
"""

import logging
import math

import numpy as np

from src.errors import DataError
from .models import ImageBuf

logger = logging.getLogger(__name__)

CUBIC_A = -0.5


def cubic_kernel(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    """Keys cubic convolution kernel, support [-2, 2]."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def resize_weights(in_len: int, out_len: int, a: float = CUBIC_A) -> np.ndarray:
    """
    Interpolation matrix for one axis.

    Args:
        in_len: Source length
        out_len: Destination length
        a: Cubic kernel parameter

    Returns:
        (out_len, in_len) float64 matrix; row i holds the weights of output sample i
    """
    if in_len < 1 or out_len < 1:
        raise DataError(f"resize lengths must be >= 1, got {in_len} -> {out_len}")
    scale = out_len / in_len
    kernel_scale = min(scale, 1.0)
    support = 2.0 / kernel_scale
    taps = int(math.ceil(2 * support)) + 1

    centers = (np.arange(out_len) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(np.int64)
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = cubic_kernel((centers[:, None] - idx) * kernel_scale, a) * kernel_scale
    weights /= weights.sum(axis=1, keepdims=True)

    matrix = np.zeros((out_len, in_len), dtype=np.float64)
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(matrix, (rows, np.clip(idx, 0, in_len - 1).ravel()), weights.ravel())
    return matrix


def resize_bicubic(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a float (H, W, C) array to (out_h, out_w, C), no clipping."""
    data = np.asarray(data, dtype=np.float64)
    rows = resize_weights(data.shape[0], out_h)
    cols = resize_weights(data.shape[1], out_w)
    out = np.einsum("oh,hwc->owc", rows, data)
    return np.einsum("pw,owc->opc", cols, out)


def bicubic_downsample(img: ImageBuf, scale: int) -> ImageBuf:
    """
    Shrink an image by an integer factor.

    Raises:
        DataError: dimensions not divisible by scale
    """
    if scale < 1:
        raise DataError(f"scale must be >= 1, got {scale}")
    if img.height % scale or img.width % scale:
        raise DataError(
            f"image {img.width}x{img.height} is not divisible by scale {scale}; crop it first"
        )
    if scale == 1:
        return ImageBuf(img.pixels.copy())
    out = resize_bicubic(img.pixels, img.height // scale, img.width // scale)
    return ImageBuf.from_float(out)


def bicubic_upsample(img: ImageBuf, scale: int) -> ImageBuf:
    """Enlarge by an integer factor with the same kernel (the bicubic baseline)."""
    if scale < 1:
        raise DataError(f"scale must be >= 1, got {scale}")
    out = resize_bicubic(img.pixels, img.height * scale, img.width * scale)
    return ImageBuf.from_float(out)


def crop_to_multiple(img: ImageBuf, scale: int) -> ImageBuf:
    """Drop bottom/right rows and columns so both sides divide by scale."""
    h = img.height - img.height % scale
    w = img.width - img.width % scale
    if h < scale or w < scale:
        raise DataError(f"image {img.width}x{img.height} is smaller than scale {scale}")
    return img.crop(0, 0, h, w)
