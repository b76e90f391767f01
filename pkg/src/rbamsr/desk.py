"""Desk-scale experiment: a small network on synthetic textures against bicubic."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .metrics import BicubicBaseline, MetricReport, evaluate
from .model import ModelConfig, build, predictor
from .synthetic import texture_corpus
from .train import TrainConfig, train


@dataclass(frozen=True)
class DeskConfig:
    n_train: int = 60
    n_test: int = 12
    image_size: int = 96
    corpus_seed: int = 1
    test_seed: int = 2
    B: int = 2
    C: int = 16
    scale: int = 2
    batch_size: int = 16
    patch_size: int = 24
    lr0: float = 1e-3
    steps_per_epoch: int = 500
    epochs: int = 6
    lr_halve_every: int = 4
    seed: int = 0

    def model_config(self) -> ModelConfig:
        return ModelConfig(B=self.B, C=self.C, r=self.scale)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, patch_size=self.patch_size, lr0=self.lr0,
                           lr_halve_every=self.lr_halve_every, epochs=self.epochs, seed=self.seed,
                           scale=self.scale, steps_per_epoch=self.steps_per_epoch)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DeskResult:
    bicubic: MetricReport
    model: MetricReport
    train_losses: list
    train_seconds: float

    @property
    def gain_db(self) -> float:
        return self.model.psnr_mean - self.bicubic.psnr_mean


def run_desk(cfg: DeskConfig = DeskConfig()) -> DeskResult:
    train_images = texture_corpus(cfg.n_train, cfg.image_size, seed=cfg.corpus_seed)
    test_images = [(f"tex{i:03d}", im)
                   for i, im in enumerate(texture_corpus(cfg.n_test, cfg.image_size, seed=cfg.test_seed))]
    model_cfg = cfg.model_config()
    train_cfg = cfg.train_config()
    params = build(model_cfg, cfg.seed, dtype=np.dtype(train_cfg.dtype))
    start = time.perf_counter()
    records = train(params, model_cfg, train_images, train_cfg)
    seconds = time.perf_counter() - start
    return DeskResult(
        bicubic=evaluate(BicubicBaseline(cfg.scale), test_images, cfg.scale),
        model=evaluate(predictor(params, model_cfg), test_images, cfg.scale),
        train_losses=[r.mean_l1 for r in records],
        train_seconds=seconds,
    )
