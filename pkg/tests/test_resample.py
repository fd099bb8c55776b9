import numpy as np
import pytest

from gradcheck import TOLERANCE, check_gradients
from inffusion.core.resample import (
    Kernel,
    bicubic_matrix,
    bicubic_upsample,
    bilinear_matrix,
    interpolation_matrix,
    keys_kernel,
    reflect_index,
    upsample,
    upsample_tensor,
)
from inffusion.core.tensor import Tensor
from inffusion.errors import ShapeError, UnknownModeError


def bicubic_oracle_1d(v: np.ndarray, r: int) -> np.ndarray:
    n = v.size
    out = np.zeros(n * r)
    for i in range(n * r):
        x = (i + 0.5) / r - 0.5
        x0 = int(np.floor(x))
        for offset in (-1, 0, 1, 2):
            k = x0 + offset
            # half-sample symmetric
            while k < 0 or k >= n:
                k = -k - 1 if k < 0 else 2 * n - 1 - k
            out[i] += keys_kernel(np.array(x - (x0 + offset)))[()] * v[k]
    return out


class TestKernels:
    def test_keys_kernel_values(self):
        np.testing.assert_allclose(keys_kernel(np.array([0.0, 1.0, 2.0, 2.5])), [1.0, 0.0, 0.0, 0.0], atol=1e-15)
        assert keys_kernel(np.array(0.5))[()] == pytest.approx(0.5625)
        assert keys_kernel(np.array(1.5))[()] == pytest.approx(-0.0625)

    def test_reflect_index(self):
        np.testing.assert_array_equal(reflect_index(np.array([-2, -1, 0, 3, 4, 5]), 4), [1, 0, 0, 3, 3, 2])

    @pytest.mark.parametrize("n,r", [(1, 4), (3, 2), (4, 4), (5, 3)])
    def test_rows_sum_to_one(self, n, r):
        np.testing.assert_allclose(bicubic_matrix(n, r).sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(bilinear_matrix(n, r).sum(axis=1), 1.0, atol=1e-12)

    def test_matrices_are_cached_read_only(self):
        assert bicubic_matrix(4, 4) is bicubic_matrix(4, 4)
        with pytest.raises(ValueError):
            bicubic_matrix(4, 4)[0, 0] = 1.0

    def test_unknown_kernel(self):
        with pytest.raises(UnknownModeError):
            interpolation_matrix(4, 2, "lanczos")

    def test_bad_factor(self):
        with pytest.raises(ShapeError):
            interpolation_matrix(4, 0, Kernel.BICUBIC)


class TestUpsample:
    def test_matches_separable_oracle(self, rng):
        x = rng.normal(size=(4, 5, 2))
        out = bicubic_upsample(x, 4)
        assert out.shape == (16, 20, 2)
        rows = np.stack([np.stack([bicubic_oracle_1d(x[:, j, c], 4) for j in range(5)], axis=1)
                         for c in range(2)], axis=-1)
        expected = np.stack([np.stack([bicubic_oracle_1d(rows[i, :, c], 4) for i in range(16)], axis=0)
                             for c in range(2)], axis=-1)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    @pytest.mark.parametrize("kind", list(Kernel))
    def test_constant_preserved(self, kind):
        np.testing.assert_allclose(upsample(np.full((3, 4, 2), 0.3), 4, kind), 0.3, atol=1e-12)

    def test_factor_one_is_identity(self, rng):
        x = rng.normal(size=(3, 3, 2))
        np.testing.assert_allclose(bicubic_upsample(x, 1), x, atol=1e-12)

    def test_linear_ramp_kept_by_bilinear_interior(self):
        ramp = np.arange(4, dtype=np.float64)[:, None, None] * np.ones((4, 4, 1))
        out = upsample(ramp, 2, Kernel.BILINEAR)[1:-1, :, 0]
        expected = (np.arange(1, 7) + 0.5) / 2 - 0.5
        np.testing.assert_allclose(out[:, 0], expected, atol=1e-12)

    def test_rank_checked(self):
        with pytest.raises(ShapeError):
            upsample(np.zeros((4, 4)), 2)

    def test_tensor_twin(self, rng):
        x = rng.normal(size=(3, 4, 2))
        np.testing.assert_allclose(upsample_tensor(Tensor(x), 2).data, bicubic_upsample(x, 2), atol=1e-12)
        assert check_gradients(lambda t: upsample_tensor(t, 2, Kernel.BILINEAR), x) < TOLERANCE
