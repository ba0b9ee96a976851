"""
Dataset Preparation and Manifests

prepare_dataset() turns a directory of HR PNGs into aligned HR / LR_x{S}
pairs plus two tab-separated manifests (train.tsv, val.tsv):

    # split train
    # scale 2
    # rgb_mean 114.4440 111.4605 103.0200
    # kernel bicubic a=-0.5 half-pixel
    HR/0001.png<TAB>LR_x2/0001.png<TAB>2

Paths are relative to the manifest's directory.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from src.errors import ConfigError, DataError
from .bicubic import bicubic_downsample, crop_to_multiple
from .images import list_images, load_image, save_image
from .models import DatasetManifest, ImageBuf, ManifestRecord

logger = logging.getLogger(__name__)

KERNEL_TAG = "bicubic a=-0.5 half-pixel"
PREPARE_LOG = "prepare.log"
DEFAULT_WORKERS = max(2, os.cpu_count() or 4)


@dataclass
class _Prepared:
    source: Path
    record: Optional[ManifestRecord]
    pixel_sum: Optional[np.ndarray] = None
    pixel_count: int = 0
    error: str = ""


def default_val_count(n_images: int) -> int:
    """Hold out 10% (at least one image) once there are two or more images."""
    if n_images < 2:
        return 0
    return max(1, n_images // 10)


def _prepare_one(path: Path, out_dir: Path, scale: int) -> _Prepared:
    try:
        hr = crop_to_multiple(load_image(path), scale)
        lr = bicubic_downsample(hr, scale)
    except DataError as e:
        return _Prepared(source=path, record=None, error=str(e))
    hr_rel = Path("HR") / f"{path.stem}.png"
    lr_rel = Path(f"LR_x{scale}") / f"{path.stem}.png"
    save_image(hr, out_dir / hr_rel)
    save_image(lr, out_dir / lr_rel)
    return _Prepared(
        source=path,
        record=ManifestRecord(hr_path=hr_rel, lr_path=lr_rel, scale=scale),
        pixel_sum=hr.pixels.reshape(-1, 3).sum(axis=0, dtype=np.float64),
        pixel_count=hr.height * hr.width,
    )


def prepare_dataset(
    hr_dir,
    out_dir,
    scale: int,
    val_count: Optional[int] = None,
    workers: Optional[int] = None,
) -> Tuple[DatasetManifest, DatasetManifest]:
    """
    Crop, downsample and index a directory of HR images.

    The last val_count images (sorted by name) form the validation split;
    rgb_mean comes from the training split only. Unreadable files are
    skipped with a warning and listed in prepare.log.

    Args:
        hr_dir: Directory of HR PNG files
        out_dir: Destination (HR/, LR_x{S}/, train.tsv, val.tsv, prepare.log)
        scale: Downscale factor S
        val_count: Images held out for validation (default: 10%, at least 1)
        workers: Parallel file workers (1 = sequential)

    Returns:
        Tuple of (train manifest, val manifest)
    """
    if scale < 1:
        raise ConfigError(f"scale must be >= 1, got {scale}")
    hr_dir, out_dir = Path(hr_dir), Path(out_dir)
    sources = list_images(hr_dir)
    if not sources:
        raise DataError(f"no images found in {hr_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    workers = workers or DEFAULT_WORKERS
    logger.info(f"Preparing {len(sources)} images from {hr_dir} (x{scale}, workers={workers})")
    if workers > 1 and len(sources) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda p: _prepare_one(p, out_dir, scale), sources))
    else:
        results = [_prepare_one(p, out_dir, scale) for p in sources]

    skipped = [r for r in results if r.record is None]
    for r in skipped:
        logger.warning(f"Skipping {r.source.name}: {r.error}")
    with open(out_dir / PREPARE_LOG, "w", encoding="utf-8") as f:
        f.write(f"# prepared {len(results) - len(skipped)} of {len(results)} images, scale {scale}\n")
        for r in skipped:
            f.write(f"skipped\t{r.source}\t{r.error}\n")

    kept = [r for r in results if r.record is not None]
    if not kept:
        raise DataError(f"no images found in {hr_dir} that could be decoded")

    if val_count is None:
        val_count = default_val_count(len(kept))
    if val_count < 0 or val_count >= len(kept):
        raise ConfigError(f"val_count must leave at least one training image (have {len(kept)}, asked {val_count})")
    train_part = kept[:len(kept) - val_count]
    val_part = kept[len(kept) - val_count:]

    total = np.sum([r.pixel_sum for r in train_part], axis=0)
    count = sum(r.pixel_count for r in train_part)
    rgb_mean = tuple(float(v) for v in total / count)

    manifests = []
    for split, part in (("train", train_part), ("val", val_part)):
        manifest = DatasetManifest(
            split=split,
            records=[r.record for r in part],
            rgb_mean=rgb_mean,
            scale=scale,
            kernel=KERNEL_TAG,
            path=out_dir / f"{split}.tsv",
        )
        write_manifest(manifest, manifest.path)
        manifests.append(manifest)

    logger.info(
        f"Prepared {len(train_part)} train / {len(val_part)} val images, "
        f"{len(skipped)} skipped, rgb_mean=({rgb_mean[0]:.2f}, {rgb_mean[1]:.2f}, {rgb_mean[2]:.2f})"
    )
    return manifests[0], manifests[1]


# ========== Manifest I/O ==========

def write_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mean = " ".join(f"{m:.4f}" for m in manifest.rgb_mean)
    lines = [
        f"# split {manifest.split}",
        f"# scale {manifest.scale}",
        f"# rgb_mean {mean}",
        f"# kernel {manifest.kernel}",
    ]
    for rec in manifest.records:
        lines.append(f"{rec.hr_path.as_posix()}\t{rec.lr_path.as_posix()}\t{rec.scale}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _image_size(path: Path) -> Tuple[int, int]:
    """(width, height) without decoding pixel data."""
    try:
        with Image.open(path) as img:
            return img.size
    except FileNotFoundError as e:
        raise DataError(f"manifest references a missing file: {path}") from e
    except OSError as e:
        raise DataError(f"cannot read image header {path}: {e}") from e


def load_manifest(path, validate: bool = True) -> DatasetManifest:
    """
    Parse a manifest and check every record's files and dimensions.

    Raises:
        DataError: malformed line, missing file, or lr != floor(hr / S)
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    manifest = DatasetManifest(split="train", path=path)
    root = path.parent
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            try:
                if key == "split":
                    manifest.split = value
                elif key == "scale":
                    manifest.scale = int(value)
                elif key == "rgb_mean":
                    manifest.rgb_mean = tuple(float(v) for v in value.split())
                elif key == "kernel":
                    manifest.kernel = value
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: bad header {line!r}") from e
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected hr<TAB>lr<TAB>scale, got {line!r}")
        try:
            scale = int(fields[2])
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: scale is not an integer: {fields[2]!r}") from e
        manifest.records.append(ManifestRecord(root / fields[0], root / fields[1], scale))

    if len(manifest.rgb_mean) != 3:
        raise DataError(f"{path}: rgb_mean needs 3 values, got {manifest.rgb_mean}")
    if validate:
        for rec in manifest.records:
            hr_w, hr_h = _image_size(rec.hr_path)
            lr_w, lr_h = _image_size(rec.lr_path)
            if (lr_w, lr_h) != (hr_w // rec.scale, hr_h // rec.scale):
                raise DataError(
                    f"{rec.lr_path.name}: LR {lr_w}x{lr_h} does not match HR {hr_w}x{hr_h} / {rec.scale}"
                )
    logger.debug(f"Loaded {manifest.split} manifest {path} ({len(manifest)} pairs)")
    return manifest


# ========== In-memory Pairs ==========

class SRDataset:
    """Decoded HR/LR pairs of one manifest, kept in memory as uint8."""

    def __init__(self, manifest: DatasetManifest):
        if not manifest.records:
            raise DataError(f"{manifest.split} manifest has no image pairs")
        self.manifest = manifest
        self.scale = manifest.scale
        self.rgb_mean = manifest.rgb_mean
        self.names: List[str] = []
        self.pairs: List[Tuple[ImageBuf, ImageBuf]] = []
        for rec in manifest.records:
            if rec.scale != self.scale:
                raise DataError(f"{rec.hr_path.name}: scale {rec.scale} differs from manifest scale {self.scale}")
            self.names.append(Path(rec.hr_path).stem)
            self.pairs.append((load_image(rec.hr_path), load_image(rec.lr_path)))

    @classmethod
    def from_path(cls, path) -> "SRDataset":
        return cls(load_manifest(path))

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, index: int) -> Tuple[ImageBuf, ImageBuf]:
        return self.pairs[index]

    def min_lr_size(self) -> Tuple[int, int]:
        sizes = [lr.size for _, lr in self.pairs]
        return min(h for h, _ in sizes), min(w for _, w in sizes)
