"""Slow, loop-based reference implementations used as independent test oracles.

Nothing here imports the package under test.
"""
import math

import numpy as np


def conv2d_loops(x, w, b, pad):
    """(Cin,H,W) x (Cout,Cin,kh,kw) cross-correlation with zero padding."""
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho, wo = h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for y in range(ho):
            for xx in range(wo):
                acc = b[o]
                for c in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            sy, sx = y + i - pad, xx + j - pad
                            if 0 <= sy < h and 0 <= sx < wd:
                                acc += w[o, c, i, j] * x[c, sy, sx]
                out[o, y, xx] = acc
    return out


def channel_covariance_loops(x):
    c, h, w = x.shape
    n = h * w
    means = [sum(x[k, i, j] for i in range(h) for j in range(w)) / n for k in range(c)]
    out = np.zeros((c, c))
    for a in range(c):
        for b in range(c):
            s = 0.0
            for i in range(h):
                for j in range(w):
                    s += (x[a, i, j] - means[a]) * (x[b, i, j] - means[b])
            out[a, b] = s / n
    return out


def spatial_covariance_loops(x):
    c, h, w = x.shape
    pos = [(i, j) for i in range(h) for j in range(w)]
    means = [sum(x[k, i, j] for k in range(c)) / c for (i, j) in pos]
    out = np.zeros((len(pos), len(pos)))
    for p, (i, j) in enumerate(pos):
        for q, (k, l) in enumerate(pos):
            s = 0.0
            for ch in range(c):
                s += (x[ch, i, j] - means[p]) * (x[ch, k, l] - means[q])
            out[p, q] = s / c
    return out


def adaptive_pool_loops(x, oh, ow):
    c, h, w = x.shape
    out = np.zeros((c, oh, ow))
    for ch in range(c):
        for i in range(oh):
            r0, r1 = (i * h) // oh, math.ceil((i + 1) * h / oh)
            for j in range(ow):
                c0, c1 = (j * w) // ow, math.ceil((j + 1) * w / ow)
                vals = [x[ch, a, b] for a in range(r0, r1) for b in range(c0, c1)]
                out[ch, i, j] = sum(vals) / len(vals)
    return out


def keys_cubic(t, a=-0.5):
    t = abs(t)
    if t <= 1:
        return (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
    if t < 2:
        return a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
    return 0.0


def bicubic_loops(img, oh, ow):
    """Direct evaluation of the separable Keys kernel, half-pixel centres, clamped edges."""
    h, w = img.shape
    out = np.zeros((oh, ow))
    for i in range(oh):
        sy = (i + 0.5) * h / oh - 0.5
        fy = math.floor(sy)
        for j in range(ow):
            sx = (j + 0.5) * w / ow - 0.5
            fx = math.floor(sx)
            acc = 0.0
            for ky in range(fy - 1, fy + 3):
                wy = keys_cubic(sy - ky)
                yy = min(max(ky, 0), h - 1)
                for kx in range(fx - 1, fx + 3):
                    wx = keys_cubic(sx - kx)
                    xx = min(max(kx, 0), w - 1)
                    acc += wy * wx * img[yy, xx]
            out[i, j] = acc
    return np.clip(out, 0.0, 1.0)


def psnr_loops(a, b):
    h, w = a.shape
    s = 0.0
    for i in range(h):
        for j in range(w):
            d = float(a[i, j]) - float(b[i, j])
            s += d * d
    mse = s / (h * w)
    return math.inf if mse == 0 else 10 * math.log10(1.0 / mse)


def ssim_loops(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    half = (size - 1) / 2
    g = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma)) for j in range(size)]
         for i in range(size)]
    total = sum(sum(row) for row in g)
    g = [[v / total for v in row] for row in g]
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    h, w = a.shape
    vals = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            ma = mb = 0.0
            for i in range(size):
                for j in range(size):
                    ma += g[i][j] * a[y + i, x + j]
                    mb += g[i][j] * b[y + i, x + j]
            va = vb = cov = 0.0
            for i in range(size):
                for j in range(size):
                    da, db = a[y + i, x + j] - ma, b[y + i, x + j] - mb
                    va += g[i][j] * da * da
                    vb += g[i][j] * db * db
                    cov += g[i][j] * da * db
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def parameter_count(B, C, r, sa_pool=8, red=4, use_ca=True, use_sa=True, first=True, second=True):
    """Count learnable scalars layer by layer."""
    conv = lambda cin, cout, k: cin * cout * k * k + cout  # noqa: E731
    total = conv(1, C, 3)
    per_block = 2 * conv(C, C, 3)
    if use_ca:
        per_block += (C + 1) if second else 0
        per_block += (C * (C // red) + C // red) + ((C // red) * C + C)
    if use_sa:
        per_block += (sa_pool * sa_pool + 1) if second else 0
        per_block += 2
    per_block += conv(C * max(int(use_ca) + int(use_sa), 1), C, 1)
    total += B * per_block
    total += int(math.log2(r)) * conv(C, 4 * C, 3)
    total += conv(C, 1, 1)
    return total


def central_difference(f, x, step=1e-6):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f(x)
        x[idx] = orig - step
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * step)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)
