"""Single-file binary checkpoints with bit-exact round-trips.

Layout (all integers little-endian):
  magic "HTRVT001" | u32 version | blob charset | blob config JSON
  | u64 iteration | u64 optimizer step | blob generator-state JSON
  | five tensor sections: parameters, first moments, second moments,
    EMA shadow, batch-norm buffers.
A blob is u32 length + UTF-8 bytes. A section is u32 count followed by
name-sorted entries: u16 name length, name, u8 rank, u32 extents, raw
float32 data. Sorting makes equal contents produce equal bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"HTRVT001"
VERSION = 1


@dataclass
class Checkpoint:
    charset_chars: str
    config: dict
    iteration: int
    step: int
    rng_state: dict
    params: dict = field(default_factory=dict)
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    ema: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)


def _blob(data: bytes) -> bytes:
    return len(data).to_bytes(4, "little") + data


def _section(tensors: dict) -> bytes:
    parts = [len(tensors).to_bytes(4, "little")]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        enc = name.encode("utf-8")
        parts.append(len(enc).to_bytes(2, "little") + enc)
        parts.append(bytes([arr.ndim]))
        for extent in arr.shape:
            parts.append(extent.to_bytes(4, "little"))
        parts.append(arr.tobytes())
    return b"".join(parts)


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, VERSION.to_bytes(4, "little"),
             _blob(ckpt.charset_chars.encode("utf-8")),
             _blob(json.dumps(ckpt.config, sort_keys=True).encode("utf-8")),
             ckpt.iteration.to_bytes(8, "little"),
             ckpt.step.to_bytes(8, "little"),
             _blob(json.dumps(ckpt.rng_state, sort_keys=True).encode("utf-8"))]
    for tensors in (ckpt.params, ckpt.adam_m, ckpt.adam_v, ckpt.ema, ckpt.buffers):
        parts.append(_section(tensors))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ValueError(f"checkpoint truncated at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u(self, n: int) -> int:
        return int.from_bytes(self.take(n), "little")

    def blob(self) -> bytes:
        return self.take(self.u(4))

    def section(self) -> dict:
        out = {}
        for _ in range(self.u(4)):
            name = self.take(self.u(2)).decode("utf-8")
            shape = tuple(self.u(4) for _ in range(self.u(1)))
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(self.take(4 * count), dtype="<f4")
            out[name] = data.reshape(shape).copy()
        return out


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(8) != MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    version = r.u(4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    charset = r.blob().decode("utf-8")
    cfg = json.loads(r.blob().decode("utf-8"))
    iteration = r.u(8)
    step = r.u(8)
    rng_state = json.loads(r.blob().decode("utf-8"))
    sections = [r.section() for _ in range(5)]
    if r.pos != len(buf):
        raise ValueError(f"trailing bytes after checkpoint at {r.pos}")
    return Checkpoint(charset, cfg, iteration, step, rng_state, *sections)


def save(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())


def apply_tensors(stored: dict, targets: dict, kind: str) -> None:
    """Copy stored arrays into target arrays by name; sets must match."""
    missing = sorted(set(targets) - set(stored))
    unknown = sorted(set(stored) - set(targets))
    if missing or unknown:
        raise ValueError(f"checkpoint {kind} mismatch: "
                         f"missing {missing or 'none'}, unknown {unknown or 'none'}")
    for name, arr in stored.items():
        target = targets[name]
        if target.shape != arr.shape:
            raise ValueError(f"{kind} {name}: shape {arr.shape} != {target.shape}")
        target[...] = arr
