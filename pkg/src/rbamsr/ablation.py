"""Attention ablation sweep with a shared seed and step budget."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import evaluate
from .model import VARIANTS, ModelConfig, build, predictor, variant
from .train import TrainConfig, steps_per_epoch, train, usable_images


@dataclass
class AblationRow:
    variant: str
    n_params: int
    steps: int
    final_l1: float
    test_psnr: float

    def line(self, sep="\t") -> str:
        psnr = "nan" if math.isnan(self.test_psnr) else f"{self.test_psnr:.4f}"
        return sep.join([self.variant, str(self.n_params), str(self.steps), f"{self.final_l1:.6f}", psnr])


HEADER = "variant\tn_params\tsteps\tfinal_train_l1\ttest_psnr_db"


def run_ablation(base: ModelConfig, cfg: TrainConfig, train_images, test_images=(),
                 variants=tuple(VARIANTS)) -> list:
    """Train every variant from the same seed for the same number of steps.

    ``final_l1`` is the mean training loss of the last epoch.
    """
    rows = []
    for name in variants:
        model_cfg = variant(base, name)
        params = build(model_cfg, cfg.seed, dtype=np.dtype(cfg.dtype))
        records = train(params, model_cfg, list(train_images), cfg)
        steps = len(records) * steps_per_epoch(usable_images(list(train_images), cfg), cfg)
        test_psnr = math.nan
        if test_images:
            test_psnr = evaluate(predictor(params, model_cfg), test_images, model_cfg.r).psnr_mean
        rows.append(AblationRow(name, params.num_parameters(), steps,
                                records[-1].mean_l1 if records else math.nan, test_psnr))
    return rows


def format_table(rows) -> str:
    return "\n".join([HEADER] + [r.line() for r in rows]) + "\n"
