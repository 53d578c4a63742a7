"""Binary checkpoint format.

Layout (little-endian)::

    b"GNET" | u32 version | u32 len + config text (utf-8)
    | u64 iteration
    | u32 n + n tensor records        (parameters)
    | u32 m + m tensor records        (momentum buffers)
    | 32-byte SHA-256 of everything above

A tensor record is ``u16 len + name | u8 dtype (0=f32, 1=f64) | u8 ndim |
u32 dims... | raw payload``.
"""

import hashlib
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod

MAGIC = b"GNET"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


@dataclass
class TrainState:
    config: "cfgmod.TrainConfig"
    params: OrderedDict
    momentum: OrderedDict
    iteration: int = 0


def _pack_tensor(name, arr):
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<BB", _CODES[arr.dtype], arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes()


def dumps(state):
    body = bytearray(MAGIC)
    body += struct.pack("<I", VERSION)
    text = state.config.to_text().encode("utf-8")
    body += struct.pack("<I", len(text)) + text
    body += struct.pack("<Q", state.iteration)
    for table in (state.params, state.momentum):
        body += struct.pack("<I", len(table))
        for name, arr in table.items():
            body += _pack_tensor(name, arr)
    return bytes(body) + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {self.pos}")
        out = self.buf[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def tensor(self):
        (n,) = self.unpack("<H", "tensor name length")
        name = self.take(n, "tensor name").decode("utf-8")
        code, ndim = self.unpack("<BB", f"{name} header")
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        shape = self.unpack(f"<{ndim}I", f"{name} shape")
        dt = _DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(self.take(count * dt.itemsize, f"{name} payload"), dtype=dt).reshape(shape)
        return name, data.astype(dt.newbyteorder("="), copy=True)


def loads(buf, expected=None):
    """Decode checkpoint bytes; ``expected`` (a TrainConfig) must match its architecture."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointError("bad magic: not a GNET checkpoint")
    if len(buf) < 4 + 4 + 32:
        raise CheckpointError("truncated checkpoint")
    (version,) = struct.unpack("<I", buf[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    body, digest = buf[:-32], buf[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt or truncated")
    r = _Reader(body)
    r.pos = 8
    (n,) = r.unpack("<I", "config length")
    text = r.take(n, "config").decode("utf-8")
    try:
        config = cfgmod.loads(text, base=cfgmod.TrainConfig())
    except ValueError as exc:
        raise CheckpointError(f"invalid config snapshot: {exc}") from None
    (iteration,) = r.unpack("<Q", "iteration")
    tables = []
    for what in ("parameters", "momentum"):
        (count,) = r.unpack("<I", f"{what} count")
        tables.append(OrderedDict(r.tensor() for _ in range(count)))
    if r.pos != len(body):
        raise CheckpointError(f"{len(body) - r.pos} trailing bytes after momentum table")
    if expected is not None:
        diff = cfgmod.arch_mismatch(expected, config)
        if diff:
            detail = ", ".join(f"{k}: expected {a!r}, checkpoint has {b!r}" for k, a, b in diff)
            raise CheckpointError(f"incompatible checkpoint config ({detail})")
    return TrainState(config, tables[0], tables[1], iteration)


def save_checkpoint(state, path):
    data = dumps(state)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path, expected=None):
    with open(path, "rb") as fh:
        return loads(fh.read(), expected)
