"""Learnable parameters and the Adam optimizer."""
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from inffusion.core.tensor import Tensor
from inffusion.errors import MissingGradientError


@dataclass
class Parameter:
    """A named leaf tensor plus its Adam moment buffers"""
    name: str
    tensor: Tensor
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        self.tensor.requires_grad = True
        self.tensor.name = self.name
        if self.m is None:
            self.m = np.zeros_like(self.tensor.data)
        if self.v is None:
            self.v = np.zeros_like(self.tensor.data)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.tensor.shape

    @property
    def grad(self):
        return self.tensor.grad

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def zero_grad(self) -> None:
        self.tensor.grad = None


def adam_step(
    params: Sequence[Parameter],
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One Adam update with bias correction; every parameter must hold a gradient"""
    missing = [p.name for p in params if p.grad is None]
    if missing:
        raise MissingGradientError(f"no gradient for {len(missing)} parameter(s)", parameters=missing)

    beta1, beta2 = betas
    for p in params:
        g = p.grad
        p.step += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        bc1 = 1.0 - beta1 ** p.step
        bc2 = 1.0 - beta2 ** p.step
        denom = np.sqrt(p.v / bc2) + eps
        p.tensor.data -= (lr / bc1) * p.m / denom


class Adam:
    """Adam over a fixed parameter list"""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-4,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    @property
    def steps_taken(self) -> int:
        return self.params[0].step if self.params else 0


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """U(-1/sqrt(fan_in), +1/sqrt(fan_in))"""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
