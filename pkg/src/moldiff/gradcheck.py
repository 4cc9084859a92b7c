"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from moldiff.autograd import Tensor


@dataclass(frozen=True)
class GradReport:
    name: str
    coords: int
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None

    def ok(self, tol: float = 1e-3) -> bool:
        return self.max_rel_error < tol


def rel_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps exact zeros comparable."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    name: str,
    params: list[tuple[str, Tensor]],
    loss_fn: Callable[[], Tensor],
    coords: int = 100,
    eps: float = 1e-6,
    seed: int = 0,
) -> GradReport:
    """Compare backprop against central differences on sampled coordinates.

    Parameters should be float64. Coordinates are spread evenly over the
    parameter tensors, at least one per tensor; small tensors are checked in
    full and their unused share goes to the larger ones, so ``coords`` are
    checked whenever the parameters have that many entries.

    Args:
        name: Label for the report.
        params: ``(name, tensor)`` pairs to perturb.
        loss_fn: Rebuilds the scalar loss from the current parameter values.
        coords: Minimum number of coordinates to check.
        eps: Finite-difference step.
        seed: Coordinate sampling seed.
    """
    rng = np.random.default_rng(seed)
    for _, p in params:
        p.grad = None
    loss_fn().backward()
    grads = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params}
    budget: dict[str, int] = {}
    left = coords
    for i, (k, p) in enumerate(sorted(params, key=lambda kp: kp[1].data.size)):
        share = max(1, -(-left // (len(params) - i)))
        budget[k] = min(share, p.data.size)
        left = max(left - budget[k], 0)
    worst, max_err, total = None, 0.0, 0
    for k, p in params:
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=budget[k], replace=False)
        for idx in picks:
            old = flat[idx]
            flat[idx] = old + eps
            up = float(loss_fn().data)
            flat[idx] = old - eps
            down = float(loss_fn().data)
            flat[idx] = old
            numeric = (up - down) / (2 * eps)
            err = rel_error(float(grads[k].reshape(-1)[idx]), numeric)
            total += 1
            if err > max_err:
                max_err = err
                worst = (k, np.unravel_index(int(idx), p.data.shape))
    return GradReport(name, total, max_err, worst)


def projection_loss(out: Tensor, seed: int = 1) -> Tensor:
    """``sum(out * R)`` with a fixed random ``R``; avoids symmetric cancellation."""
    r = np.random.default_rng(seed).standard_normal(out.shape)
    return (out * Tensor(r)).sum()
