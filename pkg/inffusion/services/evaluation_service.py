"""
Quality indices and evaluation reports.

Conventions (unit dynamic range, cubes laid out [H, W, B]):

* PSNR: 10 log10(1 / MSE) with one MSE over all bands; `per_band=True` averages
  per-band PSNRs instead. Identical images give +inf.
* SAM: mean per-pixel angle in degrees between unit spectra; pixels where
  either spectrum has zero norm are skipped and counted.
* ERGAS: (100 / r) sqrt(mean_b (RMSE_b / mean_b(gt))^2); bands with zero GT mean
  are skipped and counted.
* SSIM: per band, 11 x 11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
  statistics over the valid window positions, averaged over bands.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from inffusion.config import settings
from inffusion.core.cube import HsiCube
from inffusion.core.infn import ModelParams, predict
from inffusion.core.resample import bicubic_upsample
from inffusion.errors import ShapeError
from inffusion.schemas.reports import ImageMetrics, MetricsReport
from inffusion.services.simulation_service import Sample, SampleLike, as_sample
from inffusion.utils.logging import log_metrics

logger = logging.getLogger(__name__)

CubeLike = Union[HsiCube, np.ndarray]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _data(x: CubeLike) -> np.ndarray:
    return x.data if isinstance(x, HsiCube) else np.asarray(x, dtype=np.float64)


def _pair(pred: CubeLike, gt: CubeLike) -> Tuple[np.ndarray, np.ndarray]:
    p, g = _data(pred), _data(gt)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} and ground truth {g.shape} differ",
                         axis="shape", pred=list(p.shape), gt=list(g.shape))
    if p.ndim != 3:
        raise ShapeError(f"cubes must be [H, W, B], got {p.shape}", axis="rank")
    return p, g


def _psnr_from_mse(mse: float) -> float:
    return math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)


def psnr(pred: CubeLike, gt: CubeLike, per_band: bool = False) -> float:
    p, g = _pair(pred, gt)
    err = (p - g) ** 2
    if not per_band:
        return _psnr_from_mse(float(err.mean()))
    return float(np.mean([_psnr_from_mse(float(m)) for m in err.mean(axis=(0, 1))]))


def sam_terms(pred: CubeLike, gt: CubeLike) -> Tuple[np.ndarray, int]:
    """Per-pixel angles (degrees) of the valid pixels and the skipped-pixel count"""
    p, g = _pair(pred, gt)
    p2 = p.reshape(-1, p.shape[-1])
    g2 = g.reshape(-1, g.shape[-1])
    p_norm = np.linalg.norm(p2, axis=1, keepdims=True)
    g_norm = np.linalg.norm(g2, axis=1, keepdims=True)
    valid = (p_norm[:, 0] > 0) & (g_norm[:, 0] > 0)
    # half-angle form; equal spectra give exactly 0
    p_unit = p2[valid] / p_norm[valid]
    g_unit = g2[valid] / g_norm[valid]
    angles = np.degrees(2.0 * np.arctan2(np.linalg.norm(p_unit - g_unit, axis=1),
                                         np.linalg.norm(p_unit + g_unit, axis=1)))
    return angles, int((~valid).sum())


def sam(pred: CubeLike, gt: CubeLike) -> float:
    angles, _ = sam_terms(pred, gt)
    return float(angles.mean()) if angles.size else 0.0


def ergas_terms(pred: CubeLike, gt: CubeLike) -> Tuple[np.ndarray, int]:
    """Per-band RMSE / mean ratios for bands with a nonzero GT mean, and the skipped count"""
    p, g = _pair(pred, gt)
    rmse = np.sqrt(((p - g) ** 2).mean(axis=(0, 1)))
    means = g.mean(axis=(0, 1))
    valid = means != 0
    return rmse[valid] / means[valid], int((~valid).sum())


def _ergas_from_ratios(ratios: np.ndarray, r: int) -> float:
    if not ratios.size:
        return 0.0
    return float(100.0 / r * np.sqrt(np.mean(ratios ** 2)))


def ergas(pred: CubeLike, gt: CubeLike, r: int = 4) -> float:
    ratios, _ = ergas_terms(pred, gt)
    return _ergas_from_ratios(ratios, r)


def ssim_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


def _ssim_band(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    def filt(a):
        return ndimage.correlate(a, window, mode="reflect")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sxy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sxx + syy + SSIM_C2)
    smap = num / den
    half = window.shape[0] // 2
    h, w = x.shape
    if h >= window.shape[0] and w >= window.shape[1]:
        smap = smap[half:h - half, half:w - half]
    return float(smap.mean())


def ssim(pred: CubeLike, gt: CubeLike) -> float:
    p, g = _pair(pred, gt)
    window = ssim_window()
    value = np.mean([_ssim_band(p[:, :, b], g[:, :, b], window) for b in range(p.shape[-1])])
    return float(np.clip(value, -1.0, 1.0))


def spectral_profile(cubes: Mapping[str, CubeLike], row: int, col: int,
                     wavelengths: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """One row per band: band index (and wavelength when known), then one column per cube"""
    if not cubes:
        raise ShapeError("spectral profile needs at least one cube", axis="cubes")
    columns: Dict[str, np.ndarray] = {}
    bands = None
    for name, cube in cubes.items():
        data = _data(cube)
        if not (0 <= row < data.shape[0]):
            raise ShapeError(f"row {row} outside cube {name!r} of height {data.shape[0]}", axis="row", row=row)
        if not (0 <= col < data.shape[1]):
            raise ShapeError(f"col {col} outside cube {name!r} of width {data.shape[1]}", axis="col", col=col)
        if bands is not None and data.shape[2] != bands:
            raise ShapeError(f"cube {name!r} has {data.shape[2]} bands, expected {bands}", axis="bands")
        bands = data.shape[2]
        columns[name] = data[row, col, :]
        if wavelengths is None and isinstance(cube, HsiCube) and cube.wavelengths is not None:
            wavelengths = cube.wavelengths
    frame = pd.DataFrame({"band": np.arange(bands)})
    if wavelengths is not None:
        frame["wavelength_nm"] = np.asarray(wavelengths, dtype=np.float64)
    for name, values in columns.items():
        frame[name] = values
    return frame


def evaluate_image(name: str, pred: CubeLike, gt: CubeLike, r: int = 4,
                   per_band_psnr: bool = False) -> ImageMetrics:
    angles, sam_skipped = sam_terms(pred, gt)
    ratios, ergas_skipped = ergas_terms(pred, gt)
    p = psnr(pred, gt, per_band=per_band_psnr)
    metrics = ImageMetrics(
        image=name,
        psnr=p,
        sam=float(angles.mean()) if angles.size else 0.0,
        ergas=_ergas_from_ratios(ratios, r),
        ssim=ssim(pred, gt),
        psnr_infinite=math.isinf(p),
        sam_skipped_pixels=sam_skipped,
        ergas_skipped_bands=ergas_skipped,
    )
    log_metrics(name, metrics.psnr, metrics.sam, metrics.ergas, metrics.ssim)
    return metrics


def evaluate_predictions(
    samples: Sequence[SampleLike],
    predictor: Callable[[Sample], np.ndarray],
    r: int,
    model: str = "INFN",
    param_count: int = 0,
    workers: Optional[int] = None,
    per_band_psnr: bool = False,
    keep: Optional[Dict[str, np.ndarray]] = None,
) -> MetricsReport:
    """
    Predict and score every sample; images run on a thread pool of `workers`
    (EVAL_WORKERS by default) and the report keeps the input order.
    """
    samples = [as_sample(s, k) for k, s in enumerate(samples)]
    workers = max(1, workers or settings.EVAL_WORKERS)

    def score(sample: Sample) -> ImageMetrics:
        fused = predictor(sample)
        if keep is not None:
            keep[sample.name] = fused
        return evaluate_image(sample.name, fused, sample.gt, r, per_band_psnr)

    if workers == 1:
        images: List[ImageMetrics] = [score(s) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(score, samples))
    report = MetricsReport(model=model, param_count=param_count, images=images)
    logger.info(f"Evaluated {model} on {len(images)} image(s) with {workers} worker(s)")
    return report


def evaluate_model(samples: Sequence[SampleLike], params: ModelParams, workers: Optional[int] = None,
                   per_band_psnr: bool = False, keep: Optional[Dict[str, np.ndarray]] = None,
                   model: str = "INFN") -> MetricsReport:
    r = params.arch.fusion.r
    return evaluate_predictions(
        samples, lambda s: predict(s.lr.data, s.msi.data, params), r,
        model=model, param_count=params.count(), workers=workers,
        per_band_psnr=per_band_psnr, keep=keep,
    )


def evaluate_bicubic(samples: Sequence[SampleLike], r: int, workers: Optional[int] = None,
                     per_band_psnr: bool = False, keep: Optional[Dict[str, np.ndarray]] = None) -> MetricsReport:
    return evaluate_predictions(
        samples, lambda s: bicubic_upsample(s.lr.data, r), r,
        model="bicubic", param_count=0, workers=workers,
        per_band_psnr=per_band_psnr, keep=keep,
    )
