"""
PNG decode/encode through Pillow.
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.errors import DataError
from .models import ImageBuf

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png",)


def load_image(path) -> ImageBuf:
    """
    Decode an image file into an 8-bit RGB buffer.

    Raises:
        DataError: file missing or not a decodable image
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError as e:
        raise DataError(f"image not found: {path}") from e
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DataError(f"cannot decode image {path}: {e}") from e
    return ImageBuf(pixels)


def save_image(img: ImageBuf, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.pixels).save(path, format="PNG")
    return path


def list_images(directory) -> list:
    """Image files directly inside a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
