"""Synthetic grayscale corpora for desk-scale experiments and tests."""
from __future__ import annotations

import numpy as np

from .imaging import GrayImage


def gradient_image(rng: np.random.Generator, size: int) -> GrayImage:
    """Smooth ramp with a gentle quadratic bend; bicubic restores it almost exactly."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    a, b = rng.uniform(-0.4, 0.4, 2)
    c = rng.uniform(-0.2, 0.2)
    img = 0.5 + a * (xx - 0.5) + b * (yy - 0.5) + c * (xx - 0.5) * (yy - 0.5)
    return GrayImage.from_array(img)


def checkerboard_image(size: int, cell: int = 1, low: float = 0.1, high: float = 0.9) -> GrayImage:
    yy, xx = np.mgrid[0:size, 0:size]
    board = ((yy // cell + xx // cell) % 2).astype(np.float64)
    return GrayImage(low + (high - low) * board)


def texture_image(rng: np.random.Generator, size: int) -> GrayImage:
    """High-frequency texture: oriented gratings plus ring-shaped "cells".

    Periods span roughly 3 to 10 pixels, the band where bicubic restoration
    after 2x downsampling loses most contrast.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size), 0.5)
    for _ in range(int(rng.integers(2, 4))):
        period = rng.uniform(3.0, 10.0)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.05, 0.15)
        u = xx * np.cos(theta) + yy * np.sin(theta)
        img += amp * np.sin(2 * np.pi * u / period + phase)
    for _ in range(int(rng.integers(6, 14))):
        cy, cx = rng.uniform(0, size, 2)
        radius = rng.uniform(2.0, 6.0)
        width = rng.uniform(0.6, 1.2)
        d = np.hypot(yy - cy, xx - cx)
        img += rng.uniform(-0.25, 0.25) * np.exp(-((d - radius) / width) ** 2)
    return GrayImage.from_array(img)


def texture_corpus(n: int, size: int, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [texture_image(rng, size) for _ in range(n)]
