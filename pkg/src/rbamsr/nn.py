"""Network primitives on top of :mod:`rbamsr.autodiff`.

Feature maps are ``(C, H, W)`` or batched ``(N, C, H, W)``; every op here
accepts either and returns the matching rank.  Convolution is
cross-correlation with zero padding.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, as_tensor, grad_enabled, make_result, matmul, mean, permute, reshape, sub
from .errors import ContractError, ShapeError

# cap on the im2col buffer before falling back to row chunks
_COLS_BUDGET = 1 << 26


def _batched(x: Tensor, op: str) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{op} expects (C,H,W) or (N,C,H,W), got {x.shape}")


def _unbatch(y: Tensor, squeeze: bool) -> Tensor:
    return reshape(y, y.shape[1:]) if squeeze else y


def _pads(padding) -> tuple[int, int, int, int]:
    if isinstance(padding, int):
        return padding, padding, padding, padding
    if len(padding) == 2:
        return padding[0], padding[0], padding[1], padding[1]
    top, bottom, left, right = padding
    return top, bottom, left, right


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    n, c, hp, wp = xp.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * ho * wo)


def _conv_forward(xp: np.ndarray, w: np.ndarray):
    """Return ``(out, cols)``; ``cols`` is the full im2col buffer when it fit the budget."""
    n, c, hp, wp = xp.shape
    cout, _, kh, kw = w.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    wm = w.reshape(cout, -1)
    if kh == kw == 1:
        cols = xp.transpose(1, 0, 2, 3).reshape(c, -1)
        out = wm @ cols
        return out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3), cols
    row_bytes = c * kh * kw * n * wo * xp.itemsize
    rows = max(1, min(ho, _COLS_BUDGET // max(row_bytes, 1)))
    if rows == ho:
        cols = _im2col(xp, kh, kw)
        return (wm @ cols).reshape(cout, n, ho, wo).transpose(1, 0, 2, 3), cols
    out = np.empty((cout, n, ho, wo), dtype=np.result_type(xp, w))
    for r0 in range(0, ho, rows):
        r1 = min(ho, r0 + rows)
        cols = _im2col(xp[:, :, r0:r1 + kh - 1], kh, kw)
        out[:, :, r0:r1] = (wm @ cols).reshape(cout, n, r1 - r0, wo)
    return out.transpose(1, 0, 2, 3), None


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding=1) -> Tensor:
    """Stride-1 2-D cross-correlation with zero padding.

    ``padding`` is an int, ``(vertical, horizontal)`` or
    ``(top, bottom, left, right)``.  Output extent is
    ``H + top + bottom - kh + 1`` (same for width).
    """
    x4, squeeze = _batched(as_tensor(x), "conv2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be (C_out, C_in, kh, kw), got {weight.shape}")
    n, cin, h, w = x4.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match C_out={cout}")
    pt, pb, pl, pr = _pads(padding)
    hp, wp = h + pt + pb, w + pl + pr
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: {kh}x{kw} kernel larger than padded input {hp}x{wp}")
    ho, wo = hp - kh + 1, wp - kw + 1

    xd = x4.data
    xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else xd
    out, cols = _conv_forward(xp, weight.data)
    if not (grad_enabled() and weight.requires_grad):
        cols = None
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def vjp(g):
        gm = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        wm = weight.data.reshape(cout, -1)
        gx = gw = gb = None
        if weight.requires_grad:
            c_ = cols if cols is not None else _im2col(xp, kh, kw)
            gw = (gm @ c_.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x4.requires_grad:
            dcols = (wm.T @ gm).reshape(cin, kh, kw, n, ho, wo)
            gxp = np.zeros((cin, n, hp, wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + ho, j:j + wo] += dcols[:, i, j]
            gx = np.ascontiguousarray(gxp[:, :, pt:pt + h, pl:pl + w].transpose(1, 0, 2, 3))
        return gx, gw, gb

    parents = (x4, weight) if bias is None else (x4, weight, bias)
    return _unbatch(make_result(out, parents, vjp, "conv2d"), squeeze)


def dense(v: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Fully connected map on the last axis: ``v @ weight.T + bias``."""
    if v.shape[-1] != weight.shape[1]:
        raise ShapeError(f"dense: input length {v.shape[-1]} vs weight {weight.shape}")
    out = matmul(v, permute(weight, (1, 0)))
    return out + bias if bias is not None else out


# -- pooling ----------------------------------------------------------------

def channel_avg_pool_spatial(x: Tensor) -> Tensor:
    """Per-channel mean over all spatial positions: ``(C,H,W) -> (C,1,1)``."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")
    return mean(x, axis=(-2, -1), keepdims=True)


def spatial_avg_pool_channel(x: Tensor) -> Tensor:
    """Per-pixel mean over channels: ``(C,H,W) -> (1,H,W)``."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")
    return mean(x, axis=-3, keepdims=True)


def separable_map(x: Tensor, rows: np.ndarray, cols: np.ndarray, op: str = "separable_map") -> Tensor:
    """Fixed linear map on the two trailing axes: ``rows @ x @ cols.T``."""
    if x.shape[-2] != rows.shape[1] or x.shape[-1] != cols.shape[1]:
        raise ShapeError(f"{op}: maps {rows.shape}/{cols.shape} do not fit input {x.shape}")
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def vjp(g):
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return make_result(out, (x,), vjp, op)


def adaptive_pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row i averages inputs ``[floor(i*n/m), ceil((i+1)*n/m))``."""
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


def adaptive_avg_pool(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Average pool to a fixed ``out_h x out_w`` grid of tiling windows."""
    h, w = x.shape[-2:]
    if out_h < 1 or out_w < 1 or out_h > h or out_w > w:
        raise ShapeError(f"adaptive_avg_pool: output {out_h}x{out_w} must fit in input {h}x{w}")
    if (out_h, out_w) == (h, w):
        return x
    return separable_map(x, adaptive_pool_matrix(h, out_h), adaptive_pool_matrix(w, out_w),
                         "adaptive_avg_pool")


def nearest_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), (np.arange(n_out) * n_in) // n_out] = 1.0
    return m


def nearest_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Nearest-neighbour resize with ``src = floor(dst * in / out)``."""
    h, w = x.shape[-2:]
    if out_h < h or out_w < w:
        raise ShapeError(f"nearest_upsample: output {out_h}x{out_w} smaller than input {h}x{w}")
    if (out_h, out_w) == (h, w):
        return x
    return separable_map(x, nearest_matrix(h, out_h), nearest_matrix(w, out_w), "nearest_upsample")


# -- second-order statistics -----------------------------------------------

def _centered_gram(vectors: Tensor, count: int) -> Tensor:
    # vectors: (..., K, L); center along L, gram over K
    centered = sub(vectors, mean(vectors, axis=-1, keepdims=True))
    gram = matmul(centered, permute(centered, tuple(range(centered.ndim - 2)) + (centered.ndim - 1, centered.ndim - 2)))
    return gram * (1.0 / count)


def channel_covariance(x: Tensor) -> Tensor:
    """Channel-by-channel covariance over spatial positions, ``(C,C)``.

    Each channel is centred by its spatial mean and the Gram matrix is
    normalised by ``H*W``.
    """
    if x.ndim not in (3, 4):
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")
    h, w = x.shape[-2:]
    if h * w < 2:
        raise ContractError("channel_covariance needs at least two spatial positions")
    flat = reshape(x, x.shape[:-2] + (h * w,))
    return _centered_gram(flat, h * w)


def spatial_covariance(x: Tensor) -> Tensor:
    """Position-by-position covariance over channels, ``(H*W, H*W)``.

    Each position's length-C feature vector is centred by its channel mean;
    normalised by ``C``.
    """
    if x.ndim not in (3, 4):
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")
    c, h, w = x.shape[-3:]
    if c < 2:
        raise ContractError("spatial_covariance needs at least two channels")
    flat = reshape(x, x.shape[:-2] + (h * w,))
    lead = tuple(range(flat.ndim - 2))
    positions = permute(flat, lead + (flat.ndim - 1, flat.ndim - 2))
    return _centered_gram(positions, c)


def rowwise_conv(sigma: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Apply one shared ``1 x K`` filter to every row of ``sigma``.

    ``out[..., i] = sum_j w[j] * sigma[..., i, j] + b``.
    """
    k = sigma.shape[-1]
    if w.size != k:
        raise ShapeError(f"rowwise_conv: kernel length {w.size} does not match row length {k}")
    out = matmul(sigma, reshape(w, (k, 1)))
    out = reshape(out, out.shape[:-1])
    return out + b if b is not None else out


# -- sub-pixel shuffle -----------------------------------------------------

def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """``(r*r*C, H, W) -> (C, r*H, r*W)`` with ``out[c, r*h+i, r*w+j] = x[c*r*r + i*r + j, h, w]``."""
    x4, squeeze = _batched(x, "pixel_shuffle")
    n, crr, h, w = x4.shape
    if r < 1 or crr % (r * r):
        raise ShapeError(f"pixel_shuffle: {crr} channels not divisible by r^2={r * r}")
    c = crr // (r * r)
    y = reshape(x4, (n, c, r, r, h, w))
    y = permute(y, (0, 1, 4, 2, 5, 3))
    return _unbatch(reshape(y, (n, c, h * r, w * r)), squeeze)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    x4, squeeze = _batched(x, "pixel_unshuffle")
    n, c, hr, wr = x4.shape
    if r < 1 or hr % r or wr % r:
        raise ShapeError(f"pixel_unshuffle: extents {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    y = reshape(x4, (n, c, h, r, w, r))
    y = permute(y, (0, 1, 3, 5, 2, 4))
    return _unbatch(reshape(y, (n, c * r * r, h, w)), squeeze)
