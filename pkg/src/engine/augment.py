"""
Dihedral augmentation: the 8 combinations of a horizontal flip and
quarter-turn rotations, applied identically to an HR patch and its LR
counterpart. Arrays are (..., H, W).
"""

from typing import Tuple

import numpy as np

from src.errors import ConfigError

N_TRANSFORMS = 8


def _check_index(t: int):
    if not 0 <= t < N_TRANSFORMS:
        raise ConfigError(f"transform index must be in [0, {N_TRANSFORMS}), got {t}")


def apply_transform(arr: np.ndarray, t: int) -> np.ndarray:
    """Transform t in [0, 8): flip if t >= 4, then rotate by (t % 4) quarter turns."""
    _check_index(t)
    if t >= 4:
        arr = arr[..., ::-1]
    return np.ascontiguousarray(np.rot90(arr, t % 4, axes=(-2, -1)))


def invert_transform(arr: np.ndarray, t: int) -> np.ndarray:
    _check_index(t)
    arr = np.rot90(arr, -(t % 4), axes=(-2, -1))
    if t >= 4:
        arr = arr[..., ::-1]
    return np.ascontiguousarray(arr)


def draw_transform(rng: np.random.Generator) -> int:
    return int(rng.integers(N_TRANSFORMS))


def augment(hr_patch: np.ndarray, lr_patch: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    t = draw_transform(rng)
    return apply_transform(hr_patch, t), apply_transform(lr_patch, t)
