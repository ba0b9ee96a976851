"""
Data models for images, dataset manifests and checkpoints.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import DataError


@dataclass
class ImageBuf:
    """8-bit RGB image, row-major, stored as a (height, width, 3) uint8 array."""
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DataError(f"ImageBuf needs (H, W, 3) pixels, got {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise DataError(f"ImageBuf needs width and height >= 1, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise DataError(f"ImageBuf needs uint8 samples, got {self.pixels.dtype}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def size(self) -> Tuple[int, int]:
        """(height, width)"""
        return self.height, self.width

    def to_chw(self) -> np.ndarray:
        """Float32 (3, H, W) in the 0-255 domain, as the network consumes it."""
        return self.pixels.transpose(2, 0, 1).astype(np.float32)

    @classmethod
    def from_float(cls, data: np.ndarray) -> "ImageBuf":
        """(H, W, 3) floats -> clipped, rounded 8-bit image."""
        return cls(np.clip(np.rint(data), 0, 255).astype(np.uint8))

    def crop(self, top: int, left: int, height: int, width: int) -> "ImageBuf":
        return ImageBuf(self.pixels[top:top + height, left:left + width])


@dataclass
class ManifestRecord:
    """One aligned HR/LR pair."""
    hr_path: Path
    lr_path: Path
    scale: int


@dataclass
class DatasetManifest:
    """A split of a prepared dataset."""
    split: str
    records: List[ManifestRecord] = field(default_factory=list)
    rgb_mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: int = 2
    kernel: str = "bicubic a=-0.5 half-pixel"
    path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained network."""
    version: int
    netspec: dict
    rgb_mean: Tuple[float, float, float]
    step: int
    parameters: Dict[str, np.ndarray] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
