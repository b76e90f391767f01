"""Finite-difference verification of the network's parameter gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, no_grad
from .model import ModelConfig, ParamStore, build, forward
from .optim import l1_loss

FD_STEP = 1e-6
TOLERANCE = 1e-5


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / max(||a||, ||b||)``, zero when both vanish."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def numeric_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


@dataclass
class GroupResult:
    name: str
    size: int
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error < TOLERANCE


def toy_problem(config: ModelConfig, seed: int, size: int = 8):
    """Parameters with non-zero biases, a random LR input and HR target (float64)."""
    rng = np.random.default_rng(seed)
    params = build(config, seed)
    for name, t in params.items():
        if name.endswith(".bias"):
            t.data[...] = rng.uniform(-0.1, 0.1, size=t.shape)
    x = rng.random((1, size, size))
    target = rng.random((1, config.r * size, config.r * size))
    return params, x, target


def check_model(config: ModelConfig, seed: int = 0, size: int = 8,
                step: float = FD_STEP) -> list:
    """Compare autodiff and central-difference gradients of the L1 loss, per parameter tensor."""
    params, x, target = toy_problem(config, seed, size)
    xt, tt = Tensor(x), Tensor(target)

    loss = l1_loss(forward(params, config, xt), tt)
    loss.backward()
    analytic = {k: t.grad.copy() for k, t in params.items()}

    def f():
        with no_grad():
            return float(l1_loss(forward(params, config, xt), tt).data)

    results = []
    for name, t in params.items():
        numeric = numeric_gradient(f, t.data, step)
        results.append(GroupResult(name, t.size, relative_error(analytic[name], numeric)))
    return results


def check_store_gradients(params: ParamStore, f, step: float = FD_STEP) -> dict:
    return {name: numeric_gradient(f, t.data, step) for name, t in params.items()}
