"""
Implicit neural feature fusion.

For every HR query q with LR neighbors i (see `grid`):

    F1_i = [S_pe(C_i), S_pa^D(C_i)]        spectral code plus LR-domain spatial detail
    F2_i = [F1_i, S_pa(C_q)]               HR-domain spatial detail at the query
    F3_i = [F2_i, C_q - C_i]               relative coordinate
    E_q  = sum_i w_i * mlp(F3_i)

with S_pa^D the r x r block mean of S_pa and w_i either area or cosine weights.
Each bracket term is behind a FusionConfig switch.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np

from inffusion.core import ops
from inffusion.core.grid import QueryTable, all_queries, normalized_grid
from inffusion.core.kernels import (
    Layer,
    WeightSet,
    area_weight_array,
    cosine_weights,
    interpolate,
    mlp_forward,
)
from inffusion.core.tensor import Tensor, TensorLike, as_tensor
from inffusion.errors import ShapeError
from inffusion.schemas.configs import FusionConfig, WeightMode

logger = logging.getLogger(__name__)


def downsample_spatial(s_pa: TensorLike, r: int) -> Tensor:
    """[H, W, D2] -> [H/r, W/r, D2] by r x r block means"""
    s_pa = as_tensor(s_pa)
    if s_pa.ndim != 3:
        raise ShapeError(f"spatial features must be [H, W, D2], got {s_pa.shape}", axis="rank")
    pooled = ops.mean_pool(ops.transpose(s_pa, (2, 0, 1)), r)
    return ops.transpose(pooled, (1, 2, 0))


def _check_width(x: Tensor, expected: int, axis: str) -> None:
    if x.shape[-1] != expected:
        raise ShapeError(
            f"{axis} width is {x.shape[-1]}, expected {expected}",
            axis=axis, expected=expected, got=x.shape[-1],
        )


def build_f1(spectral: TensorLike, spatial_lr: TensorLike, cfg: Optional[FusionConfig] = None) -> Tensor:
    """Spectral code first, then the LR-domain spatial code (dropped when LR injection is off)"""
    spectral, spatial_lr = as_tensor(spectral), as_tensor(spatial_lr)
    if cfg is not None:
        _check_width(spectral, cfg.d1, "D1")
        _check_width(spatial_lr, cfg.d2, "D2")
        if not cfg.use_lr_injection:
            return spectral
    return ops.concat_channels([spectral, spatial_lr])


def build_f2(f1: TensorLike, spatial_hr: TensorLike, cfg: Optional[FusionConfig] = None) -> Tensor:
    f1, spatial_hr = as_tensor(f1), as_tensor(spatial_hr)
    if cfg is not None:
        _check_width(f1, cfg.f1_width, "F1")
        _check_width(spatial_hr, cfg.d2, "D2")
        if not cfg.use_hr_injection:
            return f1
    return ops.concat_channels([f1, spatial_hr])


def build_f3(f2: TensorLike, rel: np.ndarray, cfg: Optional[FusionConfig] = None) -> Tensor:
    f2 = as_tensor(f2)
    if cfg is not None and not cfg.use_rel_coord:
        return f2
    rel = np.asarray(rel, dtype=np.float64)
    if rel.shape != f2.shape[:-1] + (2,):
        raise ShapeError(f"relative coordinate {rel.shape} does not align with {f2.shape}", axis="rel")
    return ops.concat_channels([f2, Tensor(rel)])


def check_fusion_mlp(mlp: Sequence[Layer], in_width: int, out_width: int) -> None:
    if not mlp:
        raise ShapeError("fusion mlp has no layers", axis="depth")
    got_in = mlp[0][0].shape[1]
    if got_in != in_width:
        raise ShapeError(
            f"fusion mlp expects input width {got_in}, switches give {in_width}",
            axis="D_in", expected=in_width, got=got_in,
        )
    got_out = mlp[-1][0].shape[0]
    if got_out != out_width:
        raise ShapeError(f"fusion mlp emits {got_out} channels, expected C={out_width}",
                         axis="C", expected=out_width, got=got_out)


def lr_codes(s_pe: Tensor, s_pa: Tensor, cfg: FusionConfig) -> Tensor:
    """F1 at every LR center, [h, w, |F1|]"""
    if not cfg.use_lr_injection:
        _check_width(s_pe, cfg.d1, "D1")
        return s_pe
    return build_f1(s_pe, downsample_spatial(s_pa, cfg.r), cfg)


def _check_extents(s_pe: Tensor, s_pa: Tensor, r: int) -> None:
    if s_pe.ndim != 3 or s_pa.ndim != 3:
        raise ShapeError(f"feature maps must be [rows, cols, D], got {s_pe.shape} and {s_pa.shape}", axis="rank")
    h, w = s_pe.shape[:2]
    H, W = s_pa.shape[:2]
    if H != r * h:
        raise ShapeError(f"HR height {H} != r*h = {r}*{h}", axis="H", r=r)
    if W != r * w:
        raise ShapeError(f"HR width {W} != r*w = {r}*{w}", axis="W", r=r)


def fuse_map(
    s_pe: TensorLike,
    s_pa: TensorLike,
    queries: Optional[QueryTable],
    cfg: FusionConfig,
    mlp: Sequence[Layer],
    block_size: Optional[int] = None,
) -> Tensor:
    """
    Fused feature map E, [H, W, C].

    Queries are processed in row-major blocks of `block_size` pixels (all at once
    when None); blocks are independent so the result does not depend on the size.
    """
    s_pe, s_pa = as_tensor(s_pe), as_tensor(s_pa)
    _check_extents(s_pe, s_pa, cfg.r)
    _check_width(s_pa, cfg.d2, "D2")
    check_fusion_mlp(mlp, cfg.mlp_in_width, cfg.c)
    h, w = s_pe.shape[:2]
    H, W = s_pa.shape[:2]
    if queries is None:
        queries = all_queries(normalized_grid(H, W), h, w)
    if tuple(queries.shape) != (H, W) or (queries.lr_height, queries.lr_width) != (h, w):
        raise ShapeError(
            f"query table {queries.shape} over {queries.lr_height}x{queries.lr_width} "
            f"does not match {H}x{W} over {h}x{w}",
            axis="queries",
        )

    codes = lr_codes(s_pe, s_pa, cfg)
    lr_flat = ops.reshape(codes, (h * w, codes.shape[-1]))
    hr_flat = ops.reshape(s_pa, (H * W, cfg.d2))
    nbr = queries.flat_neighbor_index()
    near = queries.flat_nearest_index()
    rel = queries.flat_rel()
    area = None
    if cfg.weight_mode is WeightMode.AREA:
        area, degenerate = area_weight_array(queries.query, queries.neighbors, h, w)
        if degenerate.any():
            logger.warning(f"{int(degenerate.sum())} query(ies) with degenerate area, uniform weights used")
        area = area.reshape(-1, 4)

    n = H * W
    step = n if not block_size else max(1, int(block_size))
    blocks: List[Tensor] = []
    for start in range(0, n, step):
        sl = slice(start, min(start + step, n))
        f1 = ops.take(lr_flat, nbr[sl])                                   # [B, 4, |F1|]
        f2 = f1
        if cfg.use_hr_injection:
            own = np.repeat(np.arange(sl.start, sl.stop)[:, None], 4, axis=1)
            f2 = build_f2(f1, ops.take(hr_flat, own), cfg)
        f3 = build_f3(f2, rel[sl], cfg)
        values = mlp_forward(f3, mlp)                                     # [B, 4, C]
        if area is not None:
            weights = WeightSet(Tensor(area[sl]))
        else:
            weights = cosine_weights(ops.take(lr_flat, near[sl]), f1, cfg.logit_mode)
        blocks.append(interpolate(weights, values))
    fused = ops.concat(blocks, axis=0)
    return ops.reshape(fused, (H, W, cfg.c))
