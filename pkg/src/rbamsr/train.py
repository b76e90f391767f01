"""Patch-based training: sampling, dihedral augmentation, schedule, loop."""
from __future__ import annotations

import logging
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .checkpoint import Checkpoint, save_checkpoint
from .errors import ConfigError, ContractError
from .imaging import GrayImage, resample_array
from .model import ModelConfig, ParamStore, forward
from .optim import AdamState, adam_step, l1_loss

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,lr,mean_l1,wallclock_s"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    patch_size: int = 48
    lr0: float = 1e-4
    lr_halve_every: int = 50
    epochs: int = 300
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    scale: int = 2
    # None: derive from corpus size (about one pass over the HR pixels)
    steps_per_epoch: int | None = None
    checkpoint_every: int = 10
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patch_size < 1 or self.patch_size % self.scale:
            raise ConfigError(f"patch_size {self.patch_size} must be divisible by scale {self.scale}")
        if self.lr_halve_every < 1 or self.epochs < 0 or self.checkpoint_every < 1:
            raise ConfigError("lr_halve_every and checkpoint_every must be >= 1, epochs >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_schedule(epoch: int, cfg: TrainConfig = TrainConfig()) -> float:
    """``lr0 * 0.5 ** floor(epoch / lr_halve_every)``."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * 0.5 ** (epoch // cfg.lr_halve_every)


# -- augmentation --------------------------------------------------------

def dihedral(arr: np.ndarray, k: int) -> np.ndarray:
    """Element ``k`` (0..7) of the square's symmetry group: rotate ``k % 4`` quarter turns, then mirror if ``k >= 4``."""
    out = np.rot90(arr, k % 4, axes=(-2, -1))
    if k >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def inverse_dihedral(arr: np.ndarray, k: int) -> np.ndarray:
    out = arr[..., ::-1] if k >= 4 else arr
    return np.ascontiguousarray(np.rot90(out, -(k % 4), axes=(-2, -1)))


def draw_transform(seed) -> int:
    return int(np.random.default_rng(seed).integers(8))


def _check_pair(lr: np.ndarray, hr: np.ndarray) -> None:
    (h, w), (hh, ww) = lr.shape[-2:], hr.shape[-2:]
    if hh % h or ww % w or hh // h != ww // w:
        raise ContractError(f"LR {h}x{w} and HR {hh}x{ww} patches are not aligned by an integer scale")


def augment(pair: tuple[GrayImage, GrayImage], seed) -> tuple[GrayImage, GrayImage]:
    """Apply one uniformly drawn dihedral transform to both patches."""
    lr, hr = pair
    _check_pair(lr.data, hr.data)
    k = draw_transform(seed)
    return GrayImage(dihedral(lr.data, k)), GrayImage(dihedral(hr.data, k))


# -- sampling ------------------------------------------------------------

def usable_images(images: Sequence[GrayImage], cfg: TrainConfig) -> list:
    need = cfg.scale * cfg.patch_size
    keep = []
    for i, img in enumerate(images):
        if img.height < need or img.width < need:
            warnings.warn(f"training image {i} is {img.height}x{img.width}, smaller than the "
                          f"{need}x{need} HR crop; skipped")
            continue
        keep.append(img)
    if not keep:
        raise ContractError("no training image is large enough for the configured patch size")
    return keep


def steps_per_epoch(images: Sequence[GrayImage], cfg: TrainConfig) -> int:
    if cfg.steps_per_epoch is not None:
        return cfg.steps_per_epoch
    pixels = sum(img.height * img.width for img in images)
    return max(1, math.ceil(pixels / (cfg.batch_size * (cfg.scale * cfg.patch_size) ** 2)))


def sample_batch(images: Sequence[GrayImage], cfg: TrainConfig, rng: np.random.Generator):
    """Random HR crops, their bicubic LR counterparts, augmented jointly.

    Returns ``(lr, hr)`` arrays of shape ``(N, 1, p, p)`` and ``(N, 1, r*p, r*p)``.
    """
    p, r = cfg.patch_size, cfg.scale
    hp = r * p
    lr = np.empty((cfg.batch_size, 1, p, p))
    hr = np.empty((cfg.batch_size, 1, hp, hp))
    for n in range(cfg.batch_size):
        img = images[int(rng.integers(len(images)))]
        top = int(rng.integers(img.height - hp + 1))
        left = int(rng.integers(img.width - hp + 1))
        k = int(rng.integers(8))
        crop = img.data[top:top + hp, left:left + hp]
        small = np.clip(resample_array(crop, p, p), 0.0, 1.0)
        hr[n, 0] = dihedral(crop, k)
        lr[n, 0] = dihedral(small, k)
    return lr, hr


def train_step(params: ParamStore, config: ModelConfig, adam: AdamState,
               lr_batch: np.ndarray, hr_batch: np.ndarray, lr: float) -> float:
    dtype = params[params.names()[0]].dtype
    pred = forward(params, config, Tensor(lr_batch.astype(dtype, copy=False)))
    loss = l1_loss(pred, Tensor(hr_batch.astype(dtype, copy=False)))
    loss.backward()
    adam_step(params, adam, lr)
    return float(loss.data)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_l1: float
    wallclock_s: float

    def line(self) -> str:
        return f"{self.epoch},{self.lr!r},{self.mean_l1!r},{self.wallclock_s:.3f}"


def train(params: ParamStore, config: ModelConfig, images: Sequence[GrayImage], cfg: TrainConfig,
          checkpoint_dir: str | os.PathLike | None = None, adam: AdamState | None = None,
          start_epoch: int = 0, log_path: str | os.PathLike | None = None) -> list:
    """Run epochs ``start_epoch .. cfg.epochs - 1``; returns one record per epoch.

    Batches of epoch ``e`` come from a generator seeded with ``(cfg.seed, e)``,
    so a run resumed from a checkpoint reproduces the uninterrupted run.
    """
    if config.r != cfg.scale:
        raise ConfigError(f"model scale {config.r} differs from training scale {cfg.scale}")
    if not images:
        raise ContractError("training manifest is empty")
    images = usable_images(images, cfg)
    adam = adam if adam is not None else AdamState(cfg.beta1, cfg.beta2, cfg.eps)
    n_steps = steps_per_epoch(images, cfg)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    if log_path is not None and not Path(log_path).exists():
        Path(log_path).write_text(LOG_HEADER + "\n")

    records = []
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, epoch])
        lr = lr_schedule(epoch, cfg)
        losses = []
        for _ in range(n_steps):
            lr_b, hr_b = sample_batch(images, cfg, rng)
            losses.append(train_step(params, config, adam, lr_b, hr_b, lr))
        rec = EpochRecord(epoch, lr, float(np.mean(losses)), time.perf_counter() - t0)
        records.append(rec)
        log.info("epoch %d lr %.3g l1 %.6f (%.1fs)", epoch, lr, rec.mean_l1, rec.wallclock_s)
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(rec.line() + "\n")
        done = epoch + 1
        if ckpt_dir is not None and (done % cfg.checkpoint_every == 0 or done == cfg.epochs):
            ckpt = Checkpoint(params, config, adam, {"epoch": done})
            save_checkpoint(ckpt_dir / f"epoch_{done:04d}.rbam", ckpt)
    return records
