"""
Observation simulation: ground truth -> (LR-HSI, HR-MSI) by blur, downsampling and
spectral response, plus patch extraction, synthetic scenes and dataset folders.
"""
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
from scipy import ndimage

from inffusion.core.cube import HsiCube, SpectralResponse
from inffusion.errors import (
    DataShapeError,
    DivisibilityError,
    MissingInputError,
    ShapeError,
    UnknownModeError,
    ValidationError,
)
from inffusion.integrations.cube_io import load_cube, save_cube
from inffusion.utils.logging import log_function_call, log_run_progress

logger = logging.getLogger(__name__)

DATASET_INDEX = "dataset.json"
SRF_CENTERS_NM = (450.0, 550.0, 650.0)
SRF_HALF_WIDTH_NM = 80.0
DOWNSAMPLE_MODES = ("decimate", "mean")


@dataclass(frozen=True)
class Sample:
    """One simulated triple"""
    name: str
    lr: HsiCube
    msi: HsiCube
    gt: HsiCube

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lr.data, self.msi.data, self.gt.data


SampleLike = Union[Sample, Tuple]


def gaussian_kernel(kernel_size: int = 3, sigma: float = 0.5) -> np.ndarray:
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValidationError(f"blur kernel size must be odd, got {kernel_size}", kernel_size=kernel_size)
    if sigma <= 0:
        raise ValidationError(f"blur sigma must be positive, got {sigma}", sigma=sigma)
    half = kernel_size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(offsets, offsets, indexing="ij")
    kernel = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(cube: HsiCube, kernel_size: int = 3, sigma: float = 0.5) -> HsiCube:
    """Per-band correlation with the normalized sampled Gaussian, reflected borders"""
    kernel = gaussian_kernel(kernel_size, sigma)
    out = np.empty_like(cube.data)
    for b in range(cube.bands):
        out[:, :, b] = ndimage.correlate(cube.data[:, :, b], kernel, mode="reflect")
    return cube.with_data(out)


def downsample(cube: HsiCube, r: int = 4, mode: str = "decimate") -> HsiCube:
    """Keep the top-left pixel of every r x r block, or its mean with mode='mean'"""
    if mode not in DOWNSAMPLE_MODES:
        raise UnknownModeError(f"unknown downsampling mode {mode!r}", mode=mode)
    if r < 1:
        raise DivisibilityError(f"scale must be >= 1, got {r}", axis="r", r=r)
    if cube.height % r or cube.width % r:
        raise DivisibilityError(
            f"cube {cube.height}x{cube.width} is not divisible by scale {r}",
            axis="H" if cube.height % r else "W", r=r,
        )
    if mode == "decimate":
        return cube.with_data(cube.data[::r, ::r, :])
    h, w = cube.height // r, cube.width // r
    return cube.with_data(cube.data.reshape(h, r, w, r, cube.bands).mean(axis=(1, 3)))


def apply_srf(cube: HsiCube, srf: SpectralResponse) -> HsiCube:
    if srf.bands_in != cube.bands:
        raise ShapeError(
            f"SRF expects {srf.bands_in} input bands, cube has {cube.bands}",
            axis="bands", expected=srf.bands_in, got=cube.bands,
        )
    return HsiCube(cube.data @ srf.matrix)


def extract_patches(cube: HsiCube, size: int = 64, stride: Optional[int] = None) -> List[HsiCube]:
    """Row-major sliding windows; stride defaults to the patch size"""
    if stride is None:
        stride = size
    if size < 1 or stride < 1:
        raise ValidationError(f"patch size and stride must be positive, got {size}/{stride}")
    if size > cube.height or size > cube.width:
        raise ShapeError(f"patch size {size} exceeds cube {cube.height}x{cube.width}",
                         axis="H" if size > cube.height else "W", size=size)
    patches = []
    for top in range(0, cube.height - size + 1, stride):
        for left in range(0, cube.width - size + 1, stride):
            patches.append(cube.with_data(cube.data[top:top + size, left:left + size, :]))
    return patches


def simulate_pair(
    gt: HsiCube,
    srf: SpectralResponse,
    r: int = 4,
    kernel_size: int = 3,
    sigma: float = 0.5,
    mode: str = "decimate",
) -> Tuple[HsiCube, HsiCube]:
    lr = downsample(gaussian_blur(gt, kernel_size, sigma), r, mode)
    msi = apply_srf(gt, srf)
    return lr, msi


def default_wavelengths(bands: int) -> np.ndarray:
    return np.linspace(400.0, 700.0, bands)


def default_srf(wavelengths: Optional[Sequence[float]] = None, bands: Optional[int] = None) -> SpectralResponse:
    """
    Three overlapping triangular responses (blue, green, red) centered at
    450/550/650 nm with an 80 nm half-width, each column normalized. A
    response that covers no sampled wavelength falls back to the nearest one.
    """
    if wavelengths is None:
        if bands is None:
            raise ValidationError("default_srf needs wavelengths or a band count")
        wavelengths = default_wavelengths(bands)
    wl = np.asarray(wavelengths, dtype=np.float64)
    matrix = np.stack(
        [np.maximum(0.0, 1.0 - np.abs(wl - c) / SRF_HALF_WIDTH_NM) for c in SRF_CENTERS_NM], axis=1
    )
    for j, c in enumerate(SRF_CENTERS_NM):
        if wl.size and matrix[:, j].sum() == 0.0:
            matrix[np.argmin(np.abs(wl - c)), j] = 1.0
    return SpectralResponse.normalized(matrix, ["B", "G", "R"])


def make_synthetic_scene(height: int, width: int, bands: int = 31, seed: int = 0,
                         n_blobs: int = 6) -> HsiCube:
    """
    Smooth test scene in [0, 1]: soft blobs, each with its own smooth spectrum,
    blended convexly over a smooth background spectrum.
    """
    if height < 1 or width < 1 or bands < 1:
        raise ShapeError(f"scene extents must be positive, got {height}x{width}x{bands}", axis="extent")
    rng = np.random.default_rng(seed)
    wl = default_wavelengths(bands)
    t = (wl - 400.0) / 300.0

    def spectrum() -> np.ndarray:
        freq, phase = rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
        level, amp = rng.uniform(0.3, 0.7), rng.uniform(0.05, 0.25)
        return level + amp * np.sin(2 * np.pi * freq * t + phase)

    rows = (np.arange(height) + 0.5) / height
    cols = (np.arange(width) + 0.5) / width
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    abundances = [np.full((height, width), 0.5)]
    spectra = [spectrum()]
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, 1, size=2)
        radius = rng.uniform(0.08, 0.3)
        abundances.append(np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius ** 2)))
        spectra.append(spectrum())
    a = np.stack(abundances, axis=-1)
    a /= a.sum(axis=-1, keepdims=True)
    data = np.clip(a @ np.stack(spectra, axis=0), 0.0, 1.0)
    return HsiCube(data, wl)


def split_train_test(n: int, train_fraction: float = 0.8, seed: int = 0) -> Tuple[List[int], List[int]]:
    """Seeded shuffle, then the first round(n * fraction) (at least one) indices train"""
    if n < 1:
        return [], []
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(n, max(1, int(round(n * train_fraction))))
    return sorted(int(i) for i in order[:n_train]), sorted(int(i) for i in order[n_train:])


def sample_name(index: int) -> str:
    return f"patch_{index:05d}"


def as_sample(item: SampleLike, index: int = 0) -> Sample:
    """Samples pass through; (lr, msi, gt) triples of cubes or arrays are wrapped and named by position"""
    if isinstance(item, Sample):
        return item
    lr, msi, gt = item
    lr, msi, gt = (x if isinstance(x, HsiCube) else HsiCube(np.asarray(x, dtype=np.float64)) for x in (lr, msi, gt))
    return Sample(sample_name(index), lr, msi, gt)


@log_function_call
def simulate_dataset(
    gts: Sequence[HsiCube],
    out_dir: str,
    srf: Optional[SpectralResponse] = None,
    r: int = 4,
    patch: int = 64,
    stride: Optional[int] = None,
    seed: int = 0,
    mode: str = "decimate",
    train_fraction: float = 0.8,
    run_id: str = "simulate",
) -> Dict[str, object]:
    """
    Cut every ground truth into patches, simulate each, write
    patch_NNNNN_{lr,msi,gt}.cube plus the dataset index. Returns the index.
    """
    if not gts:
        raise MissingInputError("no ground-truth cube to simulate from")
    os.makedirs(out_dir, exist_ok=True)
    names: List[str] = []
    outputs: List[str] = []
    for source, gt in enumerate(gts):
        cube_srf = srf or default_srf(gt.wavelengths, gt.bands)
        patches = extract_patches(gt, patch, stride)
        log_run_progress(run_id, "simulate", f"cube {source}: {len(patches)} patch(es) of {patch}x{patch}")
        for p in patches:
            lr, msi = simulate_pair(p, cube_srf, r, mode=mode)
            name = sample_name(len(names))
            for suffix, cube in (("lr", lr), ("msi", msi), ("gt", p)):
                outputs.append(save_cube(cube, os.path.join(out_dir, f"{name}_{suffix}.cube")))
            names.append(name)

    train_idx, test_idx = split_train_test(len(names), train_fraction, seed)
    index = {
        "samples": names,
        "scale": r,
        "patch": patch,
        "stride": stride or patch,
        "downsample": mode,
        "seed": seed,
        "split": {"train": [names[i] for i in train_idx], "test": [names[i] for i in test_idx]},
    }
    index_path = os.path.join(out_dir, DATASET_INDEX)
    with open(index_path, "wb") as fh:
        fh.write(orjson.dumps(index, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))
    outputs.append(index_path)
    index["outputs"] = outputs
    logger.info(f"Simulated {len(names)} sample(s) into {out_dir} "
                f"({len(train_idx)} train / {len(test_idx)} test)")
    return index


def read_index(data_dir: str) -> Dict[str, object]:
    path = os.path.join(data_dir, DATASET_INDEX)
    if not os.path.isfile(path):
        raise MissingInputError(f"no dataset index in {data_dir}", path=path)
    with open(path, "rb") as fh:
        return orjson.loads(fh.read())


def load_dataset(data_dir: str, split: str = "train", fallback_all: bool = False) -> List[Sample]:
    """
    Samples of one split ('train', 'test' or 'all') in index order. With
    `fallback_all`, an empty split falls back to every sample.
    """
    index = read_index(data_dir)
    if split == "all":
        names = list(index["samples"])
    elif split in ("train", "test"):
        names = list(index["split"][split])
        if not names and fallback_all:
            logger.warning(f"Split {split!r} is empty, using all {len(index['samples'])} sample(s)")
            names = list(index["samples"])
    else:
        raise UnknownModeError(f"unknown split {split!r}", mode=split)

    samples = []
    for name in names:
        cubes = [load_cube(os.path.join(data_dir, f"{name}_{s}.cube")) for s in ("lr", "msi", "gt")]
        samples.append(Sample(name, *cubes))
    return samples


def dataset_files(data_dir: str, samples: Sequence[Sample]) -> List[str]:
    paths = [os.path.join(data_dir, DATASET_INDEX)]
    for s in samples:
        paths.extend(os.path.join(data_dir, f"{s.name}_{k}.cube") for k in ("lr", "msi", "gt"))
    return paths


def check_consistent(samples: Sequence[Sample]) -> None:
    """All samples must share one set of shapes"""
    if not samples:
        raise MissingInputError("dataset split is empty")
    ref = samples[0]
    for s in samples[1:]:
        for part in ("lr", "msi", "gt"):
            a, b = getattr(ref, part).shape, getattr(s, part).shape
            if a != b:
                raise DataShapeError(
                    f"{s.name} {part} is {b}, {ref.name} {part} is {a}",
                    axis=part, expected=list(a), got=list(b),
                )
