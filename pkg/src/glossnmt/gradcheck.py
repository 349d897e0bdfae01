"""Central finite-difference checks of the tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                    max_coords: int | None = None, seed: int = 0) -> float:
    """Max over coordinates of |autodiff - central difference| / max(1, |central difference|).

    ``loss_fn`` must rebuild the graph from ``params`` on every call.  With
    ``max_coords`` set, a seeded random subset of coordinates per parameter
    is probed instead of all of them.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    backward(loss)
    auto = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(params, auto):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(g.reshape(-1)[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Finite-difference check of ``f`` with respect to a single input ``x`` (use float64)."""
    x.requires_grad = True
    return check_gradients(lambda: f(x), [x], h)
