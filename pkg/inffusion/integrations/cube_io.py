"""
File formats at the edge of the pipeline: the cube container, SRF tables and PGM dumps.

Cube container, version 1 (all integers little-endian):

    magic        8 bytes   b"HSICUBE\\0"
    version      uint32
    height       uint32
    width        uint32
    bands        uint32
    has_wl       uint32    1 when a wavelength list follows
    wavelengths  bands x '<f8'   (only when has_wl)
    data         height*width*bands x '<f8', row-major, band-interleaved-by-pixel
"""
import logging
import os
import struct
from typing import List, Union

import numpy as np

from inffusion.core.cube import HsiCube, SpectralResponse
from inffusion.errors import (
    BadMagicError,
    MissingInputError,
    SrfFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
)

logger = logging.getLogger(__name__)

CUBE_MAGIC = b"HSICUBE\0"
CUBE_VERSION = 1
_HEADER = struct.Struct("<8s5I")

PathLike = Union[str, os.PathLike]


def encode_cube(cube: HsiCube) -> bytes:
    has_wl = cube.wavelengths is not None
    parts = [_HEADER.pack(CUBE_MAGIC, CUBE_VERSION, cube.height, cube.width, cube.bands, int(has_wl))]
    if has_wl:
        parts.append(np.ascontiguousarray(cube.wavelengths, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(cube.data, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_cube(blob: bytes, source: str = "<bytes>") -> HsiCube:
    head = bytes(blob[:len(CUBE_MAGIC)])
    if not CUBE_MAGIC.startswith(head):
        raise BadMagicError(f"{source} is not a cube container", path=source)
    if len(head) < len(CUBE_MAGIC):
        raise TruncatedFileError(f"{source} ends inside the magic", path=source, size=len(blob))
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{source} ends inside the header", path=source, size=len(blob))
    _, version, height, width, bands, has_wl = _HEADER.unpack_from(blob, 0)
    if version != CUBE_VERSION:
        raise UnsupportedVersionError(f"{source} has container version {version}", path=source, version=version)

    offset = _HEADER.size
    wavelengths = None
    if has_wl:
        end = offset + 8 * bands
        if end > len(blob):
            raise TruncatedFileError(f"{source} ends inside the wavelength list", path=source)
        wavelengths = np.frombuffer(blob, dtype="<f8", count=bands, offset=offset).copy()
        offset = end
    count = height * width * bands
    expected = offset + 8 * count
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{source} holds {len(blob)} bytes, header promises {expected}",
            path=source, expected=expected, size=len(blob),
        )
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(height, width, bands).copy()
    return HsiCube(data, wavelengths)


def save_cube(cube: HsiCube, path: PathLike) -> str:
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(encode_cube(cube))
    return path


def load_cube(path: PathLike) -> HsiCube:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingInputError(f"cube not found: {path}", path=path)
    with open(path, "rb") as fh:
        return decode_cube(fh.read(), source=path)


def load_srf_table(path: PathLike) -> SpectralResponse:
    """
    Plain-text SRF table: a header row of output-band names, then one row per
    input band of non-negative responses. Whitespace or comma separated; `#`
    starts a comment. Columns are normalized to sum to 1.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingInputError(f"SRF table not found: {path}", path=path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.split("#", 1)[0].replace(",", " ").split() for ln in fh]
    lines = [ln for ln in lines if ln]
    if len(lines) < 2:
        raise SrfFormatError(f"{path}: SRF table needs a header and at least one row", path=path)

    names = lines[0]
    rows: List[List[float]] = []
    for lineno, cells in enumerate(lines[1:], start=2):
        if len(cells) != len(names):
            raise SrfFormatError(f"{path}: row {lineno} has {len(cells)} values for {len(names)} bands",
                                 path=path, row=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise SrfFormatError(f"{path}: row {lineno} is not numeric", path=path, row=lineno)
    matrix = np.array(rows, dtype=np.float64)
    if (matrix < 0).any():
        raise SrfFormatError(f"{path}: responses must be non-negative", path=path)
    srf = SpectralResponse.normalized(matrix, names)
    logger.info(f"Loaded SRF {path}: {srf.bands_in} -> {srf.bands_out} bands")
    return srf


def save_srf_table(srf: SpectralResponse, path: PathLike) -> str:
    path = os.fspath(path)
    names = srf.names or [f"band{k}" for k in range(srf.bands_out)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(names) + "\n")
        for row in srf.matrix:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


def save_pgm(cube: HsiCube, band: int, path: PathLike) -> str:
    """Binary 16-bit PGM of one band, values clipped to [0, 1] and scaled to 65535"""
    if not 0 <= band < cube.bands:
        raise ValidationError(f"band {band} outside [0, {cube.bands})", band=band)
    path = os.fspath(path)
    plane = np.clip(cube.data[:, :, band], 0.0, 1.0)
    pixels = np.round(plane * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cube.width} {cube.height}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path
