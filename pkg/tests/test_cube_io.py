import struct

import numpy as np
import pytest

from inffusion.core.cube import HsiCube, SpectralResponse
from inffusion.errors import (
    BadMagicError,
    MissingInputError,
    ShapeError,
    SrfFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
)
from inffusion.integrations.cube_io import (
    CUBE_MAGIC,
    decode_cube,
    encode_cube,
    load_cube,
    load_srf_table,
    save_cube,
    save_pgm,
    save_srf_table,
)


class TestHsiCube:
    def test_extents(self):
        cube = HsiCube(np.zeros((2, 3, 4)), np.linspace(400, 700, 4))
        assert (cube.height, cube.width, cube.bands) == (2, 3, 4)

    def test_rank(self):
        with pytest.raises(ShapeError):
            HsiCube(np.zeros((2, 3)))

    def test_wavelength_count(self):
        with pytest.raises(ShapeError):
            HsiCube(np.zeros((2, 2, 3)), [400.0, 500.0])

    def test_unit_range(self):
        assert HsiCube(np.full((1, 1, 1), 1.0 + 1e-13)).in_unit_range()
        assert not HsiCube(np.full((1, 1, 1), 1.1)).in_unit_range()


class TestSpectralResponse:
    def test_columns_must_sum_to_one(self):
        with pytest.raises(SrfFormatError):
            SpectralResponse(np.array([[0.5, 0.2], [0.4, 0.8]]))

    def test_negative_entries(self):
        with pytest.raises(SrfFormatError):
            SpectralResponse(np.array([[1.5], [-0.5]]))

    def test_normalized(self):
        srf = SpectralResponse.normalized(np.array([[1.0, 0.0], [3.0, 2.0]]), ["a", "b"])
        np.testing.assert_allclose(srf.matrix.sum(axis=0), 1.0)
        assert (srf.bands_in, srf.bands_out) == (2, 2)


class TestCubeContainer:
    def test_layout(self):
        data = np.arange(12, dtype=np.float64).reshape(2, 3, 2)
        blob = encode_cube(HsiCube(data))
        assert blob[:8] == CUBE_MAGIC
        assert struct.unpack_from("<5I", blob, 8) == (1, 2, 3, 2, 0)
        # band-interleaved by pixel
        np.testing.assert_array_equal(np.frombuffer(blob, "<f8", offset=28), np.arange(12.0))

    def test_file_round_trip(self, tmp_path, rng):
        cube = HsiCube(rng.uniform(size=(5, 4, 3)), [450.0, 550.0, 650.0])
        loaded = load_cube(save_cube(cube, tmp_path / "a" / "x.cube"))
        np.testing.assert_array_equal(loaded.data, cube.data)
        np.testing.assert_array_equal(loaded.wavelengths, cube.wavelengths)

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            decode_cube(b"P5\n2 2\n" + b"\0" * 40)
        with pytest.raises(BadMagicError):
            decode_cube(b"HSX")

    def test_unsupported_version(self):
        blob = bytearray(encode_cube(HsiCube(np.zeros((1, 1, 1)))))
        blob[8:12] = struct.pack("<I", 7)
        with pytest.raises(UnsupportedVersionError):
            decode_cube(bytes(blob))

    @pytest.mark.parametrize("keep", [0, 5, 12, 30, -1])
    def test_truncated(self, keep):
        blob = encode_cube(HsiCube(np.ones((2, 2, 2)), [1.0, 2.0]))
        with pytest.raises(TruncatedFileError):
            decode_cube(blob[:keep])

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInputError):
            load_cube(tmp_path / "nope.cube")


class TestSrfTable:
    def test_load_normalizes(self, tmp_path):
        path = tmp_path / "srf.txt"
        path.write_text("# three bands into two\nB, R\n1, 0\n1, 1\n0 3  # trailing comment\n")
        srf = load_srf_table(path)
        assert srf.names == ["B", "R"]
        np.testing.assert_allclose(srf.matrix, [[0.5, 0.0], [0.5, 0.25], [0.0, 0.75]])

    def test_round_trip(self, tmp_path):
        srf = SpectralResponse.normalized(np.array([[1.0, 2.0], [3.0, 2.0]]), ["x", "y"])
        loaded = load_srf_table(save_srf_table(srf, tmp_path / "srf.txt"))
        np.testing.assert_allclose(loaded.matrix, srf.matrix, atol=1e-15)

    @pytest.mark.parametrize("text", [
        "B R\n",
        "B R\n1 2 3\n",
        "B R\n1 x\n",
        "B R\n1 -1\n0 2\n",
        "B R\n0 1\n0 1\n",
    ])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "srf.txt"
        path.write_text(text)
        with pytest.raises(SrfFormatError):
            load_srf_table(path)


class TestPgm:
    def test_header_and_scaling(self, tmp_path):
        data = np.zeros((2, 3, 2))
        data[0, 0, 1] = 1.0
        data[1, 2, 1] = 2.0
        data[0, 1, 1] = 0.5
        path = save_pgm(HsiCube(data), 1, tmp_path / "b1.pgm")
        raw = open(path, "rb").read()
        header = b"P5\n3 2\n65535\n"
        assert raw.startswith(header)
        pixels = np.frombuffer(raw[len(header):], dtype=">u2").reshape(2, 3)
        assert pixels[0, 0] == 65535 and pixels[1, 2] == 65535
        assert pixels[0, 1] == 32768

    def test_band_out_of_range(self, tmp_path):
        with pytest.raises(ValidationError):
            save_pgm(HsiCube(np.zeros((2, 2, 1))), 1, tmp_path / "x.pgm")
