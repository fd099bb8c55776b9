"""
Four-neighbor interpolation weights and the weighted-sum interpolator.

Two weight generators share one output type:

* area weights: w_i = A_i / A, where A_i is the rectangle between the query and
  the neighbor diagonally opposite corner i (bilinear weights in disguise);
* cosine weights: softmax over i of ||f_near|| ||f_i|| cos<f_near, f_i>, which is
  the dot product <f_near, f_i>; the "cosine" logit mode keeps only the cosine.

Both work on a single query or on a batch (leading axes) of queries.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from inffusion.core import ops
from inffusion.core.grid import NeighborQuery, QueryTable, axis_centers
from inffusion.core.tensor import Tensor, as_tensor
from inffusion.errors import ShapeError, UnknownModeError

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-15
# diagonal partner of neighbor i in the (i0,j0), (i0,j1), (i1,j0), (i1,j1) order
OPPOSITE = (3, 2, 1, 0)

Layer = Tuple[Tensor, Tensor]


class LogitMode(str, Enum):
    DOT = "dot"
    COSINE = "cosine"


@dataclass
class WeightSet:
    """Per-query weights over the four neighbors, aligned with the neighbor order"""
    weights: Tensor                         # [..., 4]
    degenerate: Optional[np.ndarray] = None  # [...] bool, uniform fallback used

    def numpy(self) -> np.ndarray:
        return self.weights.data

    def sums(self) -> np.ndarray:
        return self.weights.data.sum(axis=-1)

    @property
    def degenerate_count(self) -> int:
        return 0 if self.degenerate is None else int(self.degenerate.sum())


def _axis_distances(c: np.ndarray, lo: np.ndarray, hi: np.ndarray, n: int):
    centers = axis_centers(n)
    d_lo = np.abs(c - centers[lo])
    d_hi = np.abs(c - centers[hi])
    # both neighbor centers coincide with the query on this axis: equal shares
    flat = (d_lo + d_hi) <= 0.0
    return np.where(flat, 1.0, d_lo), np.where(flat, 1.0, d_hi)


def area_weight_array(query: np.ndarray, neighbors: np.ndarray, lr_height: int, lr_width: int):
    dy0, dy1 = _axis_distances(query[..., 0], neighbors[..., 0, 0], neighbors[..., 2, 0], lr_height)
    dx0, dx1 = _axis_distances(query[..., 1], neighbors[..., 0, 1], neighbors[..., 1, 1], lr_width)
    # A_k: area of the rectangle spanned by the query and neighbor k's center
    areas = np.stack([dy0 * dx0, dy0 * dx1, dy1 * dx0, dy1 * dx1], axis=-1)
    areas = areas[..., list(OPPOSITE)]
    total = areas.sum(axis=-1, keepdims=True)
    degenerate = total[..., 0] < DEGENERATE_AREA
    weights = np.where(degenerate[..., None], 0.25, areas / np.where(degenerate[..., None], 1.0, total))
    return weights, degenerate


def area_weights(query: Union[NeighborQuery, QueryTable], lr_height: int, lr_width: int) -> WeightSet:
    weights, degenerate = area_weight_array(query.query, query.neighbors, lr_height, lr_width)
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} query(ies) with degenerate area, uniform weights used")
    return WeightSet(Tensor(weights), degenerate)


def cosine_logits(f1_nearest: Tensor, f1_neighbors: Tensor, mode: LogitMode = LogitMode.DOT) -> Tensor:
    """[..., D] against [..., 4, D] -> [..., 4]"""
    mode = LogitMode(mode)
    near = ops.reshape(f1_nearest, f1_nearest.shape[:-1] + (1, f1_nearest.shape[-1]))
    if mode is LogitMode.COSINE:
        # zero-norm vectors normalize to 0, giving a neutral logit
        near = ops.normalize_lastdim(near)
        f1_neighbors = ops.normalize_lastdim(f1_neighbors)
    return ops.sum(ops.mul(f1_neighbors, near), axis=-1)


def cosine_weights(
    f1_nearest: Tensor,
    f1_neighbors: Union[Tensor, Sequence[Tensor]],
    mode: Union[LogitMode, str] = LogitMode.DOT,
) -> WeightSet:
    f1_nearest = as_tensor(f1_nearest)
    if not isinstance(f1_neighbors, Tensor):
        if len(f1_neighbors) != 4:
            raise ShapeError(f"expected 4 neighbor vectors, got {len(f1_neighbors)}", axis="neighbors")
        f1_neighbors = ops.stack(list(f1_neighbors), axis=-2)
    if f1_neighbors.shape[-2] != 4:
        raise ShapeError(f"expected 4 neighbors, got {f1_neighbors.shape[-2]}", axis="neighbors")
    if f1_neighbors.shape[-1] != f1_nearest.shape[-1]:
        raise ShapeError(
            f"neighbor width {f1_neighbors.shape[-1]} != nearest width {f1_nearest.shape[-1]}",
            axis="D1+D2",
        )
    try:
        mode = LogitMode(mode)
    except ValueError:
        raise UnknownModeError(f"unknown logit mode {mode!r}", mode=str(mode))
    return WeightSet(ops.softmax_lastdim(cosine_logits(f1_nearest, f1_neighbors, mode)))


def interpolate(weights: WeightSet, values: Union[Tensor, Sequence[Tensor]]) -> Tensor:
    """sum_i w_i * values_i; values are [..., 4, C]"""
    if not isinstance(values, Tensor):
        values = ops.stack([as_tensor(v) for v in values], axis=-2)
    w = weights.weights
    if values.shape[:-1] != w.shape:
        raise ShapeError(f"weights {w.shape} do not align with values {values.shape}", axis="neighbors")
    w = ops.reshape(w, w.shape + (1,))
    return ops.sum(ops.mul(w, values), axis=-2)


def mlp_forward(x: Tensor, layers: Sequence[Layer]) -> Tensor:
    """Affine layers over the trailing axis with relu between them"""
    for k, (weight, bias) in enumerate(layers):
        if k:
            x = ops.relu(x)
        x = ops.linear(x, weight, bias)
    return x


def liif_value(latent: Tensor, rel: np.ndarray, mlp: Sequence[Layer]) -> Tensor:
    """Baseline local-implicit interpoland: mlp(concat(latent, rel))"""
    latent = as_tensor(latent)
    rel = np.asarray(rel, dtype=np.float64)
    if rel.shape[-1] != 2:
        raise ShapeError(f"relative coordinate must end in 2, got {rel.shape}", axis="rel")
    expected = mlp[0][0].shape[1]
    if latent.shape[-1] + 2 != expected:
        raise ShapeError(
            f"mlp expects width {expected}, latent+rel gives {latent.shape[-1] + 2}",
            axis="D_in", expected=expected, got=latent.shape[-1] + 2,
        )
    return mlp_forward(ops.concat_channels([latent, Tensor(rel)]), mlp)
