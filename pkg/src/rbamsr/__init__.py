"""Residual bilinear attention network for single-image super-resolution, in numpy."""

from .autodiff import Tensor, no_grad
from .imaging import GrayImage, bicubic_resample, read_pgm, write_pgm
from .metrics import psnr, ssim
from .model import ModelConfig, ParamStore, build, forward
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "GrayImage", "ModelConfig", "ParamStore", "Tensor", "TrainConfig",
    "bicubic_resample", "build", "forward", "no_grad", "psnr", "read_pgm",
    "ssim", "train", "write_pgm",
]
