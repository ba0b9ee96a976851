"""
Checkpoint Serialization

Binary layout (all integers little-endian):

    magic         8 bytes  b"WDSRCKPT"
    version       u32
    header_len    u32, then header_len bytes of JSON (sorted keys):
                  {"config", "netspec", "rgb_mean", "step"}
    n_tensors     u32, then per tensor, sorted by (kind, name):
        kind      u8   (0 = parameter, 1 = buffer)
        name_len  u16, then UTF-8 name
        ndim      u8, then ndim x u32 dims
        data      prod(dims) x float32 ('<f4')

WN layers store v and g separately; BN layers store running statistics as
buffers once they are set.
"""

import json
import logging
import os
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from src.errors import CheckpointError, CheckpointVersionError, ConfigError
from src.models import NetSpec, build_model
from .models import Checkpoint

logger = logging.getLogger(__name__)

MAGIC = b"WDSRCKPT"
FORMAT_VERSION = 1
KIND_PARAMETER = 0
KIND_BUFFER = 1
_LE_F32 = np.dtype("<f4")


# ========== Encoding ==========

def _encode_tensor(kind: int, name: str, array: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    array = np.ascontiguousarray(array, dtype=_LE_F32)
    parts = [
        struct.pack("<BH", kind, len(raw_name)),
        raw_name,
        struct.pack("<B", array.ndim),
        struct.pack(f"<{array.ndim}I", *array.shape),
        array.tobytes(),
    ]
    return b"".join(parts)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = json.dumps(
        {
            'config': ckpt.config,
            'netspec': ckpt.netspec,
            'rgb_mean': list(ckpt.rgb_mean),
            'step': int(ckpt.step),
        },
        sort_keys=True,
    ).encode("utf-8")
    entries = [(KIND_PARAMETER, n, a) for n, a in ckpt.parameters.items()]
    entries += [(KIND_BUFFER, n, a) for n, a in ckpt.buffers.items()]
    entries.sort(key=lambda e: (e[0], e[1]))

    parts = [MAGIC, struct.pack("<II", ckpt.version, len(header)), header, struct.pack("<I", len(entries))]
    parts.extend(_encode_tensor(kind, name, array) for kind, name, array in entries)
    return b"".join(parts)


# ========== Decoding ==========

class _Reader:
    """Bounds-checked cursor over checkpoint bytes."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CheckpointError(
                f"{self.path}: truncated checkpoint (need {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)})"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes, path: Path = Path("<bytes>")) -> Checkpoint:
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a wdsrkit checkpoint (bad magic)")
    version, header_len = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {version}, this build reads version {FORMAT_VERSION}"
        )
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
        netspec, rgb_mean, step = header['netspec'], header['rgb_mean'], header['step']
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: corrupt checkpoint header: {e}") from e

    ckpt = Checkpoint(
        version=version,
        netspec=netspec,
        rgb_mean=tuple(rgb_mean),
        step=int(step),
        config=header.get('config') or {},
    )
    (count,) = reader.unpack("<I")
    for _ in range(count):
        kind, name_len = reader.unpack("<BH")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"{path}: corrupt tensor name: {e}") from e
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        array = np.frombuffer(reader.take(n * 4), dtype=_LE_F32).astype(np.float32).reshape(shape)
        if kind not in (KIND_PARAMETER, KIND_BUFFER):
            raise CheckpointError(f"{path}: unknown tensor kind {kind} for {name!r}")
        target = ckpt.parameters if kind == KIND_PARAMETER else ckpt.buffers
        if name in target:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        target[name] = array
    if reader.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - reader.pos} trailing bytes after the last tensor")
    return ckpt


# ========== Model <-> File ==========

def checkpoint_from_model(model, step: int = 0, config: Optional[dict] = None) -> Checkpoint:
    return Checkpoint(
        version=FORMAT_VERSION,
        netspec=model.spec.to_dict(),
        rgb_mean=tuple(model.spec.rgb_mean),
        step=step,
        parameters={n: t.data.astype(np.float32) for n, t in model.named_parameters().items()},
        buffers={n: np.asarray(b, dtype=np.float32) for n, b in model.named_buffers().items()},
        config=dict(config or {}),
    )


def save_checkpoint(model, path, step: int = 0, config: Optional[dict] = None) -> Path:
    """
    Write a model's parameters, buffers and spec.

    Args:
        model: SRNetwork to save
        path: Destination file (written atomically)
        step: Training step the weights belong to
        config: Resolved run configuration to embed

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(checkpoint_from_model(model, step, config))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
    logger.debug(f"Saved checkpoint {path} (step {step}, {len(payload):,} bytes)")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    return decode_checkpoint(data, path)


def restore_model(ckpt: Checkpoint):
    """Rebuild the network described by a checkpoint and load its tensors (eval mode)."""
    try:
        spec = NetSpec.from_dict({**ckpt.netspec, 'rgb_mean': list(ckpt.rgb_mean)})
    except (ConfigError, KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint netspec is invalid: {e}") from e
    model = build_model(spec, seed=0)
    params = model.named_parameters()
    missing = sorted(set(params) - set(ckpt.parameters))
    unexpected = sorted(set(ckpt.parameters) - set(params))
    if missing or unexpected:
        raise CheckpointError(f"checkpoint does not match its netspec: missing={missing}, unexpected={unexpected}")
    for name, tensor in params.items():
        value = ckpt.parameters[name]
        if value.shape != tensor.shape:
            raise CheckpointError(f"{name}: checkpoint shape {value.shape} vs model {tensor.shape}")
        tensor.data = value.copy()
    try:
        model.load_buffers(ckpt.buffers)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"checkpoint buffers do not fit the model: {e}") from e
    return model.eval()
