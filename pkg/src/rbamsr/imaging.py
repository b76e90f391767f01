"""Grayscale images: binary PGM I/O, bicubic resampling, patch extraction."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError

BICUBIC_A = -0.5


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel image with float64 intensities in ``[0, 1]``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ContractError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ContractError("GrayImage intensities must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        """Clamp an arbitrary real array into a valid image."""
        return cls(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)


# -- PGM ---------------------------------------------------------------------

def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header", offset=start)
    return buf[start:pos], pos


def decode_pgm(buf: bytes) -> GrayImage:
    if buf[:2] != b"P5":
        raise FormatError(f"not a binary PGM (magic {buf[:2]!r}, expected b'P5')", offset=0)
    pos = 2
    fields = []
    for _ in range(3):
        start = pos
        tok, pos = _next_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"bad PGM header field {tok!r}", offset=start)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is accepted", offset=pos)
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM extents {width}x{height}", offset=pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header", offset=pos)
    pos += 1
    need = width * height
    if len(buf) - pos < need:
        raise FormatError(f"short PGM raster: need {need} bytes, have {len(buf) - pos}", offset=len(buf))
    raster = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    return GrayImage(raster.reshape(height, width).astype(np.float64) / 255.0)


def encode_pgm(img: GrayImage) -> bytes:
    raster = to_bytes(img.data)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + raster.tobytes()


def to_bytes(arr: np.ndarray) -> np.ndarray:
    """Quantise intensities: ``round(clamp(x, 0, 1) * 255)``."""
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_pgm(path: str | os.PathLike) -> GrayImage:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(path: str | os.PathLike, img: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


# -- bicubic ---------------------------------------------------------------

def cubic_kernel(t: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    """Keys cubic convolution kernel."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _taps(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    offsets = np.arange(-1, 3)
    idx = base[:, None] + offsets[None, :]
    weights = cubic_kernel(src[:, None] - idx)
    return np.clip(idx, 0, n_in - 1), weights


def _resample_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = x.shape[axis]
    if n_in == n_out:
        return x
    idx, wts = _taps(n_in, n_out)
    x = np.moveaxis(x, axis, -1)
    # difference form: constants survive exactly, the centre tap carries 1 - sum(others)
    centre = x[..., idx[:, 1]]
    out = centre.copy()
    for k in (0, 2, 3):
        out += wts[:, k] * (x[..., idx[:, k]] - centre)
    return np.moveaxis(out, -1, axis)


def resample_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Unclamped separable bicubic resize of the two trailing axes."""
    if out_h < 1 or out_w < 1:
        raise ContractError(f"output extents must be >= 1, got {out_h}x{out_w}")
    y = _resample_axis(np.asarray(arr, dtype=np.float64), out_h, -2)
    return _resample_axis(y, out_w, -1)


def bicubic_resample(img: GrayImage, out_h: int, out_w: int) -> GrayImage:
    """Bicubic resize (a = -0.5, half-pixel centres, clamped edges).

    Used both as the degradation operator and as the interpolation baseline.
    """
    out = resample_array(img.data, out_h, out_w)
    return GrayImage(np.clip(out, 0.0, 1.0))


def downsample(img: GrayImage, r: int) -> GrayImage:
    if img.height % r or img.width % r:
        raise ContractError(f"{img.height}x{img.width} image is not divisible by {r}")
    return bicubic_resample(img, img.height // r, img.width // r)


def upsample(img: GrayImage, r: int) -> GrayImage:
    return bicubic_resample(img, img.height * r, img.width * r)


def extract_patch(img: GrayImage, top: int, left: int, size: int) -> GrayImage:
    if size < 1 or top < 0 or left < 0 or top + size > img.height or left + size > img.width:
        raise ContractError(
            f"patch ({top}, {left}, size {size}) does not fit in {img.height}x{img.width} image"
        )
    return GrayImage(img.data[top:top + size, left:left + size].copy())
