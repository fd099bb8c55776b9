"""
Pixel-center coordinates on [-1, 1]^2 and four-neighbor queries.

HR and LR rasters share one convention: pixel (i, j) of an H x W raster sits at
(-1 + (2i + 1)/H, -1 + (2j + 1)/W). A query's neighbors are the 2 x 2 window of
LR centers around it, ordered (i0, j0), (i0, j1), (i1, j0), (i1, j1); each corner
index is clamped into bounds on its own, so border queries repeat pixels.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from inffusion.errors import ShapeError


@dataclass(frozen=True)
class CoordGrid:
    height: int
    width: int
    coords: np.ndarray  # [H, W, 2]

    def at(self, i: int, j: int) -> np.ndarray:
        return self.coords[i, j]


@dataclass(frozen=True)
class NeighborQuery:
    query: np.ndarray      # [2]
    neighbors: np.ndarray  # [4, 2] LR (row, col)
    nearest: np.ndarray    # [2]
    rel: np.ndarray        # [4, 2] query - neighbor center


def axis_centers(n: int) -> np.ndarray:
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def normalized_grid(height: int, width: int) -> CoordGrid:
    if height < 1 or width < 1:
        raise ShapeError(f"grid extents must be positive, got {height}x{width}",
                         axis="H" if height < 1 else "W")
    rows = axis_centers(height)
    cols = axis_centers(width)
    coords = np.empty((height, width, 2), dtype=np.float64)
    coords[..., 0] = rows[:, None]
    coords[..., 1] = cols[None, :]
    coords.flags.writeable = False
    return CoordGrid(height, width, coords)


def _axis_neighbors(c: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped lower/upper neighbor indices and nearest index along one axis"""
    # continuous index: center k maps to k exactly
    t = ((c + 1.0) * n - 1.0) / 2.0
    lo = np.floor(t).astype(np.intp)
    hi = lo + 1
    lo_c = np.clip(lo, 0, n - 1)
    hi_c = np.clip(hi, 0, n - 1)
    centers = axis_centers(n)
    d_lo = np.abs(c - centers[lo_c])
    d_hi = np.abs(c - centers[hi_c])
    # ties go to the smaller index
    nearest = np.where(d_hi < d_lo, hi_c, lo_c)
    return lo_c, hi_c, nearest


def _query_arrays(coords: np.ndarray, lr_height: int, lr_width: int):
    if lr_height < 1 or lr_width < 1:
        raise ShapeError(f"LR extents must be positive, got {lr_height}x{lr_width}", axis="lr")
    r0, r1, rn = _axis_neighbors(coords[..., 0], lr_height)
    c0, c1, cn = _axis_neighbors(coords[..., 1], lr_width)
    rows = np.stack([r0, r0, r1, r1], axis=-1)
    cols = np.stack([c0, c1, c0, c1], axis=-1)
    neighbors = np.stack([rows, cols], axis=-1)
    nearest = np.stack([rn, cn], axis=-1)
    centers = np.stack([axis_centers(lr_height)[rows], axis_centers(lr_width)[cols]], axis=-1)
    rel = coords[..., None, :] - centers
    return neighbors, nearest, rel


def neighbor_query(query: np.ndarray, lr_height: int, lr_width: int) -> NeighborQuery:
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (2,):
        raise ShapeError(f"query must be a 2-vector, got shape {query.shape}", axis="query")
    neighbors, nearest, rel = _query_arrays(query, lr_height, lr_width)
    return NeighborQuery(query=query, neighbors=neighbors, nearest=nearest, rel=rel)


@dataclass(frozen=True)
class QueryTable:
    """Struct-of-arrays form of the H x W neighbor queries over an LR raster"""
    lr_height: int
    lr_width: int
    query: np.ndarray      # [H, W, 2]
    neighbors: np.ndarray  # [H, W, 4, 2]
    nearest: np.ndarray    # [H, W, 2]
    rel: np.ndarray        # [H, W, 4, 2]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.query.shape[:2]

    def __getitem__(self, ij: Tuple[int, int]) -> NeighborQuery:
        i, j = ij
        return NeighborQuery(
            query=self.query[i, j],
            neighbors=self.neighbors[i, j],
            nearest=self.nearest[i, j],
            rel=self.rel[i, j],
        )

    def flat_neighbor_index(self) -> np.ndarray:
        """[H*W, 4] row-major LR indices"""
        idx = self.neighbors[..., 0] * self.lr_width + self.neighbors[..., 1]
        return idx.reshape(-1, 4)

    def flat_nearest_index(self) -> np.ndarray:
        idx = self.nearest[..., 0] * self.lr_width + self.nearest[..., 1]
        return idx.reshape(-1)

    def flat_rel(self) -> np.ndarray:
        return self.rel.reshape(-1, 4, 2)


def all_queries(hr_grid: CoordGrid, lr_height: int, lr_width: int) -> QueryTable:
    neighbors, nearest, rel = _query_arrays(hr_grid.coords, lr_height, lr_width)
    return QueryTable(lr_height, lr_width, hr_grid.coords, neighbors, nearest, rel)
