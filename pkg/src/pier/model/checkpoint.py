"""Binary checkpoint format.

Layout (all integers little-endian uint32)::

    b"PIERCKPT" | version | n_pairs | (key_len key val_len val)*
    | n_blocks | (name_len name rank dim* float32[prod(dims)])* | sha256(previous bytes)

Config pairs hold the :class:`ModelConfig`; pairs prefixed ``meta.`` carry
free-form run metadata.
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError, VersionError
from .config import ModelConfig
from .fused import PARAM_GROUPS, FusedModel

MAGIC = b"PIERCKPT"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


def _w_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(_U32.pack(len(raw)))
    buf.write(raw)


def serialize(model: FusedModel, meta: dict[str, str] | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_U32.pack(FORMAT_VERSION))
    pairs = dict(model.config.to_pairs())
    for k, v in sorted((meta or {}).items()):
        pairs[f"meta.{k}"] = str(v)
    buf.write(_U32.pack(len(pairs)))
    for k in sorted(pairs):
        _w_str(buf, k)
        _w_str(buf, pairs[k])
    params = sorted(model.named_parameters())
    buf.write(_U32.pack(len(params)))
    for name, t in params:
        _w_str(buf, name)
        buf.write(_U32.pack(t.ndim))
        for d in t.shape:
            buf.write(_U32.pack(d))
        buf.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: FusedModel, path, meta: dict[str, str] | None = None) -> str:
    """Write atomically; returns the hex digest stored in the trailer."""
    data = serialize(model, meta)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return data[-32:].hex()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def parse(data: bytes) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    if len(data) < len(MAGIC) + 36 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, digest = data[:-32], data[-32:]
    r = _Reader(body)
    r.take(len(MAGIC))
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version} != supported {FORMAT_VERSION}")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    pairs = {}
    for _ in range(r.u32()):
        k = r.string()
        pairs[k] = r.string()
    blocks = {}
    for _ in range(r.u32()):
        name = r.string()
        shape = tuple(r.u32() for _ in range(r.u32()))
        n = int(np.prod(shape)) if shape else 1
        blocks[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after parameter blocks")
    return pairs, blocks


def read_checkpoint(path) -> tuple[ModelConfig, dict[str, str], dict[str, np.ndarray]]:
    pairs, blocks = parse(Path(path).read_bytes())
    meta = {k[5:]: v for k, v in pairs.items() if k.startswith("meta.")}
    cfg = ModelConfig.from_pairs({k: v for k, v in pairs.items() if not k.startswith("meta.")})
    return cfg, meta, blocks


def load_into(model: FusedModel, blocks: dict[str, np.ndarray], groups=PARAM_GROUPS) -> None:
    """Copy the named blocks of ``groups`` into ``model``; shapes must match exactly."""
    expected = {n: t for n, t in model.named_parameters() if n.split(".", 1)[0] in groups}
    missing = sorted(set(expected) - set(blocks))
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {missing[:5]}")
    for name, t in expected.items():
        if blocks[name].shape != t.shape:
            raise CheckpointError(f"shape mismatch for {name}: {blocks[name].shape} vs {t.shape}")
        t.data = blocks[name].astype(t.dtype, copy=True)


def load_checkpoint(path, expect: ModelConfig | None = None) -> tuple[FusedModel, dict[str, str]]:
    cfg, meta, blocks = read_checkpoint(path)
    if expect is not None and expect != cfg:
        raise CheckpointError(f"checkpoint config {cfg} does not match expected {expect}")
    unknown = set(blocks) - {n for n, _ in FusedModel(cfg).named_parameters()}
    if unknown:
        raise CheckpointError(f"checkpoint has unexpected parameters: {sorted(unknown)[:5]}")
    model = FusedModel(cfg)
    load_into(model, blocks)
    return model, meta


def group_checksums(model: FusedModel) -> dict[str, str]:
    """sha256 per parameter group over (name, shape, float32 bytes)."""
    out = {}
    for group in PARAM_GROUPS:
        h = hashlib.sha256()
        for name, t in sorted(model.group_parameters(group)):
            h.update(name.encode())
            h.update(str(t.shape).encode())
            h.update(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        out[group] = h.hexdigest()
    return out


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
