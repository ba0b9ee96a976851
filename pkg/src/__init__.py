"""
wdsrkit - Core Package

A wide-activation single-image super-resolution training engine built on
numpy: reverse-mode autodiff, conv / pixel-shuffle / normalization ops,
WDSR and EDSR-baseline networks, bicubic data preparation, Adam training
with checkpoints, and PSNR evaluation.

Main Components:
- ConfigLoader / RunConfig: YAML-based configuration management
- Tensor: autograd tensor (src.autograd)
- build_model: WDSR / EDSR-baseline networks from a NetSpec
- Trainer: the training loop with metric log and checkpoints
"""

__version__ = "1.0.0"

# Export commonly used classes for convenience
from src.config import ConfigLoader, RunConfig, load_run_config
from src.errors import WdsrError

__all__ = [
    "ConfigLoader",
    "RunConfig",
    "load_run_config",
    "WdsrError",
]
