"""PSNR, SSIM, SEM aggregation and the evaluation protocol."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError
from .imaging import GrayImage, bicubic_resample

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pixels(x) -> np.ndarray:
    return x.data if isinstance(x, GrayImage) else np.asarray(x, dtype=np.float64)


def mse(a, b) -> float:
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ShapeError(f"image extents differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean single-scale SSIM over every fully-inside 11x11 Gaussian window."""
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ShapeError(f"image extents differ: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ContractError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    win = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def local(x):
        return np.einsum("ijkl,kl->ij", sliding_window_view(x, win.shape), win)

    mu_a, mu_b = local(a), local(b)
    var_a = local(a * a) - mu_a * mu_a
    var_b = local(b * b) - mu_b * mu_b
    cov = local(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def sem(values: Sequence[float]) -> float:
    """Standard error of the mean with the population standard deviation."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        return math.nan
    return float(np.std(vals) / math.sqrt(vals.size))


@dataclass
class ImageScore:
    image_id: str
    psnr: float
    ssim: float
    seconds: float


@dataclass
class MetricReport:
    scores: list = field(default_factory=list)

    @property
    def finite_psnr(self) -> list:
        return [s.psnr for s in self.scores if math.isfinite(s.psnr)]

    @property
    def psnr_mean(self) -> float:
        vals = self.finite_psnr
        if not self.scores:
            return math.nan
        if not vals:
            return math.inf
        return float(np.mean(vals))

    @property
    def psnr_sem(self) -> float:
        return sem(self.finite_psnr)

    @property
    def ssim_mean(self) -> float:
        return float(np.mean([s.ssim for s in self.scores])) if self.scores else math.nan

    @property
    def seconds_mean(self) -> float:
        return float(np.mean([s.seconds for s in self.scores])) if self.scores else math.nan

    def to_table(self, sep: str = "\t") -> str:
        lines = [sep.join(["image_id", "psnr_db", "ssim", "seconds"])]
        for s in self.scores:
            lines.append(sep.join([s.image_id, _fmt(s.psnr), f"{s.ssim:.6f}", f"{s.seconds:.6f}"]))
        lines.append(sep.join([
            "mean", f"{_fmt(self.psnr_mean)}+-{_fmt(self.psnr_sem)}",
            f"{self.ssim_mean:.6f}", f"{self.seconds_mean:.6f}",
        ]))
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.4f}"


class BicubicBaseline:
    """Plain bicubic upscaling, the interpolation reference."""

    def __init__(self, scale: int):
        self.scale = scale

    def __call__(self, lr: np.ndarray) -> np.ndarray:
        h, w = lr.shape
        return bicubic_resample(GrayImage(lr), h * self.scale, w * self.scale).data


def evaluate(predict: Callable[[np.ndarray], np.ndarray],
             images: Iterable[tuple[str, GrayImage]], r: int) -> MetricReport:
    """Degrade each HR image by ``r``, restore it with ``predict``, score against HR.

    Only the ``predict`` call is timed.  Images whose extents are not
    divisible by ``r`` are skipped with a warning.
    """
    report = MetricReport()
    for image_id, hr in images:
        if hr.height % r or hr.width % r:
            warnings.warn(f"skipping {image_id}: {hr.height}x{hr.width} not divisible by {r}")
            continue
        lr = bicubic_resample(hr, hr.height // r, hr.width // r)
        start = time.perf_counter()
        sr = predict(lr.data)
        elapsed = time.perf_counter() - start
        sr = np.clip(np.asarray(sr, dtype=np.float64), 0.0, 1.0)
        report.scores.append(ImageScore(image_id, psnr(sr, hr.data), ssim(sr, hr.data), elapsed))
    n_inf = sum(1 for s in report.scores if math.isinf(s.psnr))
    if n_inf:
        warnings.warn(f"{n_inf} image(s) reconstructed exactly (infinite PSNR); excluded from mean/SEM")
    return report
