"""L1 loss and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, abs_, mean, sub
from .errors import OptimizerStateError, ShapeError


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error; the subgradient at zero difference is zero."""
    if tuple(pred.shape) != tuple(np.shape(target.data if isinstance(target, Tensor) else target)):
        raise ShapeError(f"l1_loss: prediction {pred.shape} vs target {np.shape(target)}")
    return mean(abs_(sub(pred, target)))


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update over ``params`` in store order, then zero the grads."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise OptimizerStateError(f"no gradient for {missing[0]} (and {len(missing) - 1} more)")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        p.data -= update.astype(p.dtype, copy=False)
        g.fill(0)

