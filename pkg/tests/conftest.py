"""
Shared fixtures: seeded RNG, a small synthetic PNG corpus and its
prepared HR/LR dataset.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

# Add project root to path
PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.autograd import Tensor  # noqa: E402
from src.data import SRDataset, prepare_dataset  # noqa: E402
from src.models import BlockSpec, NetSpec  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def textured_image(seed: int, height: int = 48, width: int = 48) -> np.ndarray:
    """Smooth gradients plus a few sharp edges, uint8 (H, W, 3)."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.empty((height, width, 3))
    for c in range(3):
        fy, fx = r.uniform(0.05, 0.3, 2)
        img[..., c] = 128 + 60 * np.sin(fy * yy + r.uniform(0, 6)) * np.cos(fx * xx + r.uniform(0, 6))
    top, left = r.integers(0, height // 2), r.integers(0, width // 2)
    img[top:top + height // 3, left:left + width // 3] += r.uniform(-50, 50, 3)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_png(path: Path, pixels: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PNG")
    return path


@pytest.fixture
def hr_dir(tmp_path):
    """Six 48x48 textured HR images."""
    directory = tmp_path / "hr"
    for i in range(6):
        write_png(directory / f"{i:04d}.png", textured_image(i))
    return directory


@pytest.fixture
def prepared(hr_dir, tmp_path):
    """(train_manifest, val_manifest) of hr_dir at x2 with two validation images."""
    return prepare_dataset(hr_dir, tmp_path / "desk", scale=2, val_count=2, workers=1)


@pytest.fixture
def train_set(prepared):
    return SRDataset(prepared[0])


@pytest.fixture
def val_set(prepared):
    return SRDataset(prepared[1])


def tiny_net_spec(family: str = "wdsr-a", normalization: str = "weight-norm", topology: str = "wdsr",
                  scale: int = 2, width: int = 8, r: int = 2, n_blocks: int = 1) -> NetSpec:
    return NetSpec(
        topology=topology,
        scale=scale,
        n_blocks=n_blocks,
        block=BlockSpec(family=family, w1=width, r=1 if family == "vanilla" else r,
                        normalization=normalization),
    )


def zero_module(module):
    """Make every conv output zero; weight-norm directions v keep their norm, g goes to 0."""
    for name, p in module.named_parameters().items():
        if name == "v" or name.endswith(".v"):
            continue
        p.data[...] = 0.0


def as_tensor(data, requires_grad: bool = False, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=requires_grad, dtype=dtype)
