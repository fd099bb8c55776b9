"""Central finite-difference gradient checking for the autodiff engine."""
from typing import Callable, Optional, Sequence

import numpy as np

from inffusion.core.tensor import Tensor

STEP = 1e-5
TOLERANCE = 1e-4


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_gradient(loss_fn: Callable[[], Tensor], leaf: Tensor, h: float = STEP,
                     indices: Optional[Sequence] = None) -> np.ndarray:
    """d loss / d leaf by central differences, perturbing leaf.data in place"""
    grad = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    for k in positions:
        original = flat[k]
        flat[k] = original + h
        plus = loss_fn().item()
        flat[k] = original - h
        minus = loss_fn().item()
        flat[k] = original
        grad.reshape(-1)[k] = (plus - minus) / (2.0 * h)
    return grad


def check_gradients(fn: Callable[..., Tensor], *arrays: np.ndarray, seed: int = 0,
                    max_entries: Optional[int] = None) -> float:
    """
    Compare analytic and numeric gradients of sum(fn(*inputs) * R) for a fixed
    random R; returns the worst relative error over all inputs.
    """
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    reference = fn(*leaves)
    weights = np.random.default_rng(seed).normal(size=reference.shape)

    def loss() -> Tensor:
        out = fn(*leaves)
        return (out * weights).sum()

    loss().backward()
    worst = 0.0
    picker = np.random.default_rng(seed + 1)
    for leaf in leaves:
        analytic = leaf.grad.copy()
        indices = None
        if max_entries is not None and leaf.size > max_entries:
            indices = picker.choice(leaf.size, size=max_entries, replace=False)
        numeric = numeric_gradient(loss, leaf, indices=indices)
        if indices is not None:
            analytic = analytic.reshape(-1)[indices]
            numeric = numeric.reshape(-1)[indices]
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst
