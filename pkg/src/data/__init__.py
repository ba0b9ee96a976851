"""
Data module: images, bicubic degradation, dataset manifests, checkpoints
and the metric log.
"""

from .bicubic import (
    bicubic_downsample,
    bicubic_upsample,
    crop_to_multiple,
    cubic_kernel,
    resize_bicubic,
    resize_weights,
)
from .checkpoint import (
    FORMAT_VERSION,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from .dataset import SRDataset, load_manifest, prepare_dataset, write_manifest
from .images import list_images, load_image, save_image
from .models import Checkpoint, DatasetManifest, ImageBuf, ManifestRecord
from .sink import METRIC_COLUMNS, MetricSink, read_metrics

__all__ = [
    "bicubic_downsample",
    "bicubic_upsample",
    "crop_to_multiple",
    "cubic_kernel",
    "resize_bicubic",
    "resize_weights",
    "FORMAT_VERSION",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "restore_model",
    "save_checkpoint",
    "SRDataset",
    "load_manifest",
    "prepare_dataset",
    "write_manifest",
    "list_images",
    "load_image",
    "save_image",
    "Checkpoint",
    "DatasetManifest",
    "ImageBuf",
    "ManifestRecord",
    "METRIC_COLUMNS",
    "MetricSink",
    "read_metrics",
]
