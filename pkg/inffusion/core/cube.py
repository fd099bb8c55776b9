from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from inffusion.errors import ShapeError, SrfFormatError

RANGE_TOLERANCE = 1e-12
COLUMN_SUM_TOLERANCE = 1e-9


@dataclass
class HsiCube:
    """
    Image cube laid out [height, width, bands] in float64.

    Used for ground truth, LR-HSI, HR-MSI and fused outputs alike. `wavelengths`
    (nanometers), when present, has one entry per band.
    """
    data: np.ndarray
    wavelengths: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if self.data.ndim != 3:
            raise ShapeError(f"cube data must be [H, W, B], got shape {self.data.shape}", axis="rank")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64).reshape(-1)
            if self.wavelengths.size != self.bands:
                raise ShapeError(
                    f"{self.wavelengths.size} wavelengths for {self.bands} bands",
                    axis="bands", expected=self.bands, got=int(self.wavelengths.size),
                )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def in_unit_range(self, tol: float = RANGE_TOLERANCE) -> bool:
        return bool(self.data.min() >= -tol and self.data.max() <= 1.0 + tol)

    def with_data(self, data: np.ndarray, keep_wavelengths: bool = True) -> "HsiCube":
        return HsiCube(data, self.wavelengths if keep_wavelengths else None)


@dataclass
class SpectralResponse:
    """bands_in x bands_out response matrix; each column sums to 1"""
    matrix: np.ndarray
    names: Optional[list] = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or 0 in self.matrix.shape:
            raise SrfFormatError(f"spectral response must be a non-empty 2-D table, got {self.matrix.shape}")
        if (self.matrix < 0).any():
            raise SrfFormatError("spectral response has negative entries")
        sums = self.matrix.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > COLUMN_SUM_TOLERANCE):
            raise SrfFormatError("spectral response columns must sum to 1", column_sums=sums.tolist())
        if self.names is not None and len(self.names) != self.bands_out:
            raise SrfFormatError(f"{len(self.names)} names for {self.bands_out} output bands")

    @classmethod
    def normalized(cls, matrix: np.ndarray, names: Optional[list] = None) -> "SpectralResponse":
        matrix = np.asarray(matrix, dtype=np.float64)
        sums = matrix.sum(axis=0)
        if matrix.ndim != 2 or np.any(sums <= 0):
            raise SrfFormatError("every spectral response column needs a positive total")
        return cls(matrix / sums, names)

    @property
    def bands_in(self) -> int:
        return self.matrix.shape[0]

    @property
    def bands_out(self) -> int:
        return self.matrix.shape[1]
