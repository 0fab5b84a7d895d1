"""Binary checkpoints for policy parameters and optimizer state.

Layout (all integers little-endian)::

    8s   magic  b"CTXSELCK"
    u32  format version
    u32  dim, n_cross, n_linear, adam step
    u32  tensor count
    per tensor:
        u16 name length, name (utf-8)
        u8  ndim, u32 * ndim shape
        f64 * prod(shape) data (little-endian)
    u32  crc32 of everything above
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .exceptions import CorruptionError, MigrationError
from .grpo import AdamState
from .policy import PolicyConfig, PolicyParams

__all__ = ["FORMAT_VERSION", "save_checkpoint", "load_checkpoint"]

MAGIC = b"CTXSELCK"
FORMAT_VERSION = 1


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(params: PolicyParams, opt_state: AdamState | None, path) -> None:
    opt_state = opt_state or AdamState()
    cfg = params.config
    tensors: list[tuple[str, np.ndarray]] = [(f"param/{k}", v) for k, v in params.tensors.items()]
    tensors += [(f"adam_m/{k}", v) for k, v in opt_state.m.items()]
    tensors += [(f"adam_v/{k}", v) for k, v in opt_state.v.items()]
    body = MAGIC + struct.pack("<I", FORMAT_VERSION)
    body += struct.pack("<4I", cfg.dim, cfg.n_cross, cfg.n_linear, opt_state.step)
    body += struct.pack("<I", len(tensors))
    body += b"".join(_pack_tensor(n, a) for n, a in tensors)
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(body)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> tuple[PolicyParams, AdamState]:
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptionError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise MigrationError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(data) < r.pos + 4:
        raise CorruptionError("checkpoint is truncated")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptionError(f"{path}: checksum mismatch (truncated or corrupted)")
    dim, n_cross, n_linear, step = r.unpack("<4I")
    (count,) = r.unpack("<I")
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for _ in range(count):
        (n_name,) = r.unpack("<H")
        name = r.take(n_name).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        kind, _, key = name.partition("/")
        if kind not in groups:
            raise CorruptionError(f"unknown tensor group {kind!r}")
        groups[kind][key] = arr
    if r.pos != len(data) - 4:
        raise CorruptionError("trailing bytes in checkpoint")
    params = PolicyParams(PolicyConfig(dim, n_cross, n_linear), groups["param"])
    params.validate()
    return params, AdamState(step, groups["adam_m"], groups["adam_v"])
