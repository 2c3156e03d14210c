"""Finite-difference verification of reverse-mode gradients."""

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Compare the gradient of scalar ``f`` at ``x`` against central differences.

    Returns the max over coordinates of |g_ad - g_fd| / max(1, |g_ad| + |g_fd|).
    """
    leaf = Tensor(x.data.copy(), requires_grad=True)
    f(leaf).backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    base = x.data.copy()
    numeric = np.zeros_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        shifted = base.copy().reshape(-1)
        shifted[i] += eps
        plus = f(Tensor(shifted.reshape(base.shape))).item()
        shifted[i] -= 2 * eps
        minus = f(Tensor(shifted.reshape(base.shape))).item()
        flat[i] = (plus - minus) / (2 * eps)
    return _relative_error(analytic, numeric)


def grad_check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Gradient check of a closure with respect to parameters it reads.

    When ``max_coords`` is set, that many coordinates per parameter are
    sampled instead of perturbing every entry.
    """
    for param in params:
        param.zero_grad()
    loss_fn().backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for param, grad in zip(params, analytic):
        param.data = np.ascontiguousarray(param.data)
        flat = param.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.zeros(len(coords))
        for j, i in enumerate(coords):
            original = flat[i]
            flat[i] = original + eps
            plus = loss_fn().item()
            flat[i] = original - eps
            minus = loss_fn().item()
            flat[i] = original
            numeric[j] = (plus - minus) / (2 * eps)
        worst = max(worst, _relative_error(grad.reshape(-1)[coords], numeric))
    for param in params:
        param.zero_grad()
    return worst
