"""Adam with decoupled weight decay, and the inverse square-root schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NonFiniteGradientError
from .tensor import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.998
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], **hyper)


def adam_step(params, grads, state: AdamState, lr: float, names=None) -> None:
    """One bias-corrected Adam update, in place.

    Weight decay is decoupled: parameters shrink by ``lr * weight_decay``
    before the moment-based step.  A ``None`` gradient counts as zero.
    """
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    params = list(params)
    grads = list(grads)
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ContractError("params, grads and optimizer state have different lengths")
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.m[i].shape != p.data.shape:
            raise DimensionError("adam_step", f"state for parameter {i} has wrong shape",
                                 [p.data.shape, state.m[i].shape])
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(names[i] if names else p.name or f"param[{i}]")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if state.weight_decay:
            p.data *= p.data.dtype.type(1.0 - lr * state.weight_decay)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= (lr * update).astype(p.data.dtype, copy=False)


@dataclass
class Adam:
    """Adam over a fixed parameter list."""

    params: list[Tensor]
    lr: float = 3e-4
    betas: tuple[float, float] = (0.9, 0.998)
    eps: float = 1e-8
    weight_decay: float = 0.0
    names: list[str] | None = None
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.params = list(self.params)
        self.state = AdamState.for_params(self.params, beta1=self.betas[0], beta2=self.betas[1],
                                          eps=self.eps, weight_decay=self.weight_decay)

    def step(self, lr: float | None = None) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  self.lr if lr is None else lr, self.names)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def inverse_sqrt_lr(step: int, base_lr: float, warmup: int) -> float:
    """Linear warm-up to ``base_lr`` at ``warmup``, then decay as 1/sqrt(step)."""
    if warmup < 1:
        raise ContractError("warmup must be >= 1")
    step = max(int(step), 1)
    return base_lr * min(math.sqrt(warmup / step), step / warmup)
