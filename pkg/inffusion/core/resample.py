"""
Integer-factor separable upsampling on the half-pixel-center grid.

Output sample i of an n -> n*r axis reads source position x = (i + 0.5)/r - 0.5.
Bicubic uses the Keys kernel with a = -0.5 and half-sample symmetric borders
(index -1 -> 0, n -> n - 1); bilinear clamps to the edge. Both are materialized as
[n*r, n] matrices so the same operator serves numpy arrays and autodiff tensors.
"""
from enum import Enum
from functools import lru_cache
from typing import Union

import numpy as np

from inffusion.core import ops
from inffusion.core.tensor import Tensor
from inffusion.errors import ShapeError, UnknownModeError

KEYS_A = -0.5


class Kernel(str, Enum):
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


def keys_kernel(x: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ..."""
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def _source_positions(n: int, r: int) -> np.ndarray:
    return (np.arange(n * r, dtype=np.float64) + 0.5) / r - 0.5


@lru_cache(maxsize=64)
def bicubic_matrix(n: int, r: int) -> np.ndarray:
    x = _source_positions(n, r)
    x0 = np.floor(x).astype(np.intp)
    t = x - x0
    mat = np.zeros((n * r, n), dtype=np.float64)
    rows = np.arange(n * r)
    for offset in (-1, 0, 1, 2):
        w = keys_kernel(t - offset)
        # taps that reflect onto the same source pixel accumulate
        np.add.at(mat, (rows, reflect_index(x0 + offset, n)), w)
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=64)
def bilinear_matrix(n: int, r: int) -> np.ndarray:
    x = _source_positions(n, r)
    x0 = np.floor(x).astype(np.intp)
    t = x - x0
    mat = np.zeros((n * r, n), dtype=np.float64)
    rows = np.arange(n * r)
    np.add.at(mat, (rows, np.clip(x0, 0, n - 1)), 1.0 - t)
    np.add.at(mat, (rows, np.clip(x0 + 1, 0, n - 1)), t)
    mat.flags.writeable = False
    return mat


def interpolation_matrix(n: int, r: int, kind: Union[Kernel, str]) -> np.ndarray:
    if n < 1 or r < 1:
        raise ShapeError(f"cannot build a {n} -> {n}*{r} resampler", axis="r" if r < 1 else "n")
    try:
        kind = Kernel(kind)
    except ValueError:
        raise UnknownModeError(f"unknown interpolation kernel {kind!r}", mode=str(kind))
    if kind is Kernel.BICUBIC:
        return bicubic_matrix(n, r)
    return bilinear_matrix(n, r)


def upsample(x: np.ndarray, r: int, kind: Union[Kernel, str] = Kernel.BICUBIC) -> np.ndarray:
    """[h, w, C] -> [h*r, w*r, C]"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"upsample expects [h, w, C], got {x.shape}", axis="rank")
    a_h = interpolation_matrix(x.shape[0], r, kind)
    a_w = interpolation_matrix(x.shape[1], r, kind)
    return np.einsum("Hh,hwc,Ww->HWc", a_h, x, a_w, optimize=True)


def bicubic_upsample(x: np.ndarray, r: int) -> np.ndarray:
    return upsample(x, r, Kernel.BICUBIC)


def upsample_tensor(x: Tensor, r: int, kind: Union[Kernel, str] = Kernel.BICUBIC) -> Tensor:
    """Differentiable twin of `upsample` for feature maps"""
    if x.ndim != 3:
        raise ShapeError(f"upsample expects [h, w, C], got {x.shape}", axis="rank")
    a_h = interpolation_matrix(x.shape[0], r, kind)
    a_w = interpolation_matrix(x.shape[1], r, kind)
    return ops.resample(x, a_h, a_w)
