"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"RBAM"  u32 version
    u32 n    n bytes UTF-8 config text, one "key = value" per line
    u32 count, then `count` parameter records
    u64 adam step, f64 beta1, f64 beta2, f64 eps
    u32 count, then `count` optimizer records named "m.<param>" / "v.<param>"

A record is ``u32 name_len, name, u8 dtype tag, u32 rank, u32 extents[rank]``
followed by the raw little-endian array data.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import FormatError
from .model import ModelConfig, ParamStore, parameter_shapes
from .optim import AdamState

MAGIC = b"RBAM"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 1, np.dtype("float64"): 2}


@dataclass
class Checkpoint:
    params: ParamStore
    config: ModelConfig
    adam: AdamState = field(default_factory=AdamState)
    meta: dict = field(default_factory=dict)


def _config_text(config: ModelConfig, meta: dict) -> str:
    lines = [f"{k} = {v}" for k, v in config.to_dict().items()]
    lines += [f"meta.{k} = {v}" for k, v in meta.items()]
    return "\n".join(lines) + "\n"


def _parse_config_text(text: str, offset: int):
    types = {f.name: f.type for f in fields(ModelConfig)}
    values, meta = {}, {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise FormatError(f"bad config line {line!r}", offset=offset)
        if key.startswith("meta."):
            meta[key[5:]] = int(raw) if raw.lstrip("-").isdigit() else raw
        elif key in types:
            values[key] = raw == "True" if types[key] in (bool, "bool") else int(raw)
        else:
            raise FormatError(f"unknown config key {key!r}", offset=offset)
    return ModelConfig(**values), meta


def _record(name: str, arr: np.ndarray) -> bytes:
    tag = _TAGS.get(arr.dtype)
    if tag is None:
        raise TypeError(f"unsupported dtype {arr.dtype} for {name}")
    raw = name.encode("utf-8")
    head = struct.pack("<I", len(raw)) + raw + struct.pack("<BI", tag, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = _config_text(ckpt.config, ckpt.meta).encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg]
    params = list(ckpt.params.items())
    parts.append(struct.pack("<I", len(params)))
    parts += [_record(name, t.data) for name, t in params]
    a = ckpt.adam
    parts.append(struct.pack("<Qddd", a.step, a.beta1, a.beta2, a.eps))
    opt = [(f"m.{k}", a.m[k]) for k in a.m] + [(f"v.{k}", a.v[k]) for k in a.v]
    parts.append(struct.pack("<I", len(opt)))
    parts += [_record(name, arr) for name, arr in opt]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def record(self):
        start = self.pos
        (n,) = self.unpack("<I", "record name length")
        try:
            name = self.take(n, "record name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("record name is not UTF-8", offset=start) from None
        tag, rank = self.unpack("<BI", f"header of {name}")
        if tag not in _DTYPES:
            raise FormatError(f"unknown dtype tag {tag} for {name}", offset=self.pos - 5)
        shape = self.unpack(f"<{rank}I", f"extents of {name}")
        dtype = _DTYPES[tag]
        count = int(np.prod(shape)) if rank else 1
        raw = self.take(count * dtype.itemsize, f"data of {name}")
        arr = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
        return name, arr


def decode(buf: bytes) -> Checkpoint:
    rd = _Reader(buf)
    if rd.take(4, "magic") != MAGIC:
        raise FormatError("bad magic; not an RBAM checkpoint", offset=0)
    (version,) = rd.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    (n,) = rd.unpack("<I", "config length")
    cfg_at = rd.pos
    try:
        text = rd.take(n, "config").decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("config block is not UTF-8", offset=cfg_at) from None
    config, meta = _parse_config_text(text, cfg_at)
    (count,) = rd.unpack("<I", "parameter count")
    params = ParamStore()
    for _ in range(count):
        name, arr = rd.record()
        params.add(name, arr)
    step, b1, b2, eps = rd.unpack("<Qddd", "optimizer header")
    adam = AdamState(beta1=b1, beta2=b2, eps=eps, step=step)
    (count,) = rd.unpack("<I", "optimizer record count")
    for _ in range(count):
        name, arr = rd.record()
        kind, _, pname = name.partition(".")
        if kind not in ("m", "v") or pname not in params:
            raise FormatError(f"unexpected optimizer record {name}", offset=rd.pos)
        (adam.m if kind == "m" else adam.v)[pname] = arr
    if rd.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint", offset=rd.pos)
    return Checkpoint(params, config, adam, meta)


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())


def check_compatible(ckpt: Checkpoint) -> None:
    """Raise ``FormatError`` unless the stored tensors match the stored config."""
    expected = parameter_shapes(ckpt.config)
    got = {k: t.shape for k, t in ckpt.params.items()}
    if list(expected) != list(got):
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        raise FormatError(f"checkpoint parameters do not match its model config "
                          f"(missing {missing[:3]}, unexpected {extra[:3]})")
    for k, shape in expected.items():
        if tuple(got[k]) != tuple(shape):
            raise FormatError(f"parameter {k} has shape {got[k]}, config implies {shape}")

