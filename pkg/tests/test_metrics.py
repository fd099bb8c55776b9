import math

import numpy as np
import pytest
from scipy import ndimage

from inffusion.core.cube import HsiCube
from inffusion.core.infn import init_params
from inffusion.core.resample import bicubic_upsample
from inffusion.errors import ShapeError
from inffusion.schemas.reports import ImageMetrics, MetricsReport
from inffusion.services.evaluation_service import (
    ergas,
    ergas_terms,
    evaluate_bicubic,
    evaluate_image,
    evaluate_model,
    psnr,
    sam,
    sam_terms,
    spectral_profile,
    ssim,
    ssim_window,
)
from inffusion.services.simulation_service import Sample, default_srf, make_synthetic_scene, simulate_pair


def windowed_ssim(x, y):
    """Per-band SSIM from explicit local statistics at every valid window position"""
    win = ssim_window()
    k = win.shape[0]
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    values = []
    for b in range(x.shape[2]):
        a, g = x[:, :, b], y[:, :, b]
        scores = []
        for i in range(a.shape[0] - k + 1):
            for j in range(a.shape[1] - k + 1):
                pa, pg = a[i:i + k, j:j + k], g[i:i + k, j:j + k]
                mx, my = (win * pa).sum(), (win * pg).sum()
                vx = (win * pa * pa).sum() - mx * mx
                vy = (win * pg * pg).sum() - my * my
                cxy = (win * pa * pg).sum() - mx * my
                scores.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        values.append(np.mean(scores))
    return float(np.mean(values))


class TestClosedForms:
    def test_constant_offset(self):
        gt = np.ones((4, 4, 3))
        pred = np.full((4, 4, 3), 0.9)
        assert psnr(pred, gt) == pytest.approx(20.0, abs=1e-9)
        assert psnr(pred, gt, per_band=True) == pytest.approx(20.0, abs=1e-9)
        assert ergas(pred, gt, r=4) == pytest.approx(2.5, abs=1e-9)

    def test_orthogonal_spectra(self):
        pred = np.zeros((1, 1, 2))
        gt = np.zeros((1, 1, 2))
        pred[0, 0] = [1.0, 0.0]
        gt[0, 0] = [0.0, 1.0]
        assert sam(pred, gt) == pytest.approx(90.0, abs=1e-12)


class TestFixedPoints:
    def test_identical_images(self, rng):
        gt = rng.uniform(0.1, 1.0, size=(16, 16, 4))
        assert math.isinf(psnr(gt, gt))
        assert sam(gt, gt) == 0.0
        assert sam(3.0 * gt, gt) == pytest.approx(0.0, abs=1e-6)
        assert ergas(gt, gt) == 0.0
        assert ssim(gt, gt) == pytest.approx(1.0, abs=1e-12)
        m = evaluate_image("same", gt, gt)
        assert m.psnr_infinite

    def test_random_pair_oracles(self, rng):
        gt = rng.uniform(0.1, 1.0, size=(6, 5, 4))
        pred = rng.uniform(0.1, 1.0, size=(6, 5, 4))
        assert psnr(pred, gt) == pytest.approx(10 * math.log10(1.0 / np.mean((pred - gt) ** 2)))
        per_pixel = [
            math.degrees(math.acos(np.clip(np.dot(p, g) / (np.linalg.norm(p) * np.linalg.norm(g)), -1, 1)))
            for p, g in zip(pred.reshape(-1, 4), gt.reshape(-1, 4))
        ]
        assert sam(pred, gt) == pytest.approx(np.mean(per_pixel), abs=1e-9)
        ratios = [np.sqrt(np.mean((pred[:, :, b] - gt[:, :, b]) ** 2)) / gt[:, :, b].mean() for b in range(4)]
        assert ergas(pred, gt, 2) == pytest.approx(50.0 * np.sqrt(np.mean(np.square(ratios))), abs=1e-9)


class TestInvariances:
    @pytest.mark.parametrize("scale", [0.01, 3.0, 250.0])
    def test_sam_scale_invariant(self, rng, scale):
        gt = rng.uniform(0.1, 1.0, size=(5, 5, 6))
        pred = rng.uniform(0.1, 1.0, size=(5, 5, 6))
        assert sam(scale * pred, gt) == pytest.approx(sam(pred, gt), abs=1e-9)

    @pytest.mark.parametrize("scale", [0.01, 3.0, 250.0])
    def test_ergas_scale_covariant(self, rng, scale):
        gt = rng.uniform(0.1, 1.0, size=(5, 5, 6))
        pred = rng.uniform(0.1, 1.0, size=(5, 5, 6))
        assert ergas(scale * pred, scale * gt) == pytest.approx(ergas(pred, gt), abs=1e-9)


class TestSkipsAndErrors:
    def test_zero_pixels_skipped(self):
        gt = np.ones((2, 2, 3))
        pred = np.ones((2, 2, 3))
        pred[0, 0] = 0.0
        angles, skipped = sam_terms(pred, gt)
        assert skipped == 1 and angles.size == 3

    def test_zero_mean_band_skipped(self):
        gt = np.ones((2, 2, 2))
        gt[:, :, 1] = 0.0
        ratios, skipped = ergas_terms(np.zeros((2, 2, 2)), gt)
        assert skipped == 1 and ratios.size == 1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))


class TestSsim:
    def test_constant_offset_matches_window_oracle(self):
        gt = np.full((14, 13, 2), 0.5)
        pred = gt + 0.1
        assert ssim(pred, gt) == pytest.approx(windowed_ssim(pred, gt), abs=1e-10)

    def test_checkerboards_match_window_oracle(self):
        board = (np.indices((12, 12)).sum(axis=0) % 2).astype(np.float64)[:, :, None]
        value = ssim(board, 1.0 - board)
        assert value < 1.0
        assert value == pytest.approx(windowed_ssim(board, 1.0 - board), abs=1e-10)

    def test_random_matches_window_oracle(self, rng):
        gt = rng.uniform(size=(13, 15, 2))
        pred = np.clip(gt + rng.normal(scale=0.05, size=gt.shape), 0, 1)
        assert ssim(pred, gt) == pytest.approx(windowed_ssim(pred, gt), abs=1e-10)

    def test_window(self):
        w = ssim_window()
        assert w.shape == (11, 11)
        assert w.sum() == pytest.approx(1.0)
        assert ndimage.maximum_position(w) == (5, 5)


class TestSpectralProfile:
    def test_single_band(self):
        frame = spectral_profile({"gt": np.full((2, 2, 1), 0.3)}, 1, 1)
        assert len(frame) == 1
        assert list(frame.columns) == ["band", "gt"]

    def test_values_echoed(self, rng):
        a = HsiCube(rng.uniform(size=(3, 4, 5)), np.linspace(400, 700, 5))
        b = rng.uniform(size=(3, 4, 5))
        frame = spectral_profile({"fused": b, "gt": a}, 2, 3)
        assert list(frame.columns) == ["band", "wavelength_nm", "fused", "gt"]
        np.testing.assert_array_equal(frame["gt"].to_numpy(), a.data[2, 3])
        np.testing.assert_array_equal(frame["fused"].to_numpy(), b[2, 3])

    def test_identical_columns(self, rng):
        x = rng.uniform(size=(2, 2, 4))
        frame = spectral_profile({"pred": x, "gt": x}, 0, 1)
        assert frame["pred"].equals(frame["gt"])

    def test_out_of_bounds(self):
        with pytest.raises(ShapeError):
            spectral_profile({"gt": np.zeros((2, 2, 1))}, 2, 0)


class TestReports:
    @pytest.fixture
    def samples(self):
        out = []
        for k in range(3):
            gt = make_synthetic_scene(16, 16, bands=4, seed=k)
            lr, msi = simulate_pair(gt, default_srf(gt.wavelengths), r=4)
            out.append(Sample(f"patch_{k:05d}", lr, msi, gt))
        return out

    def test_bicubic_report(self, samples):
        kept = {}
        report = evaluate_bicubic(samples, 4, keep=kept)
        assert [m.image for m in report.images] == [s.name for s in samples]
        np.testing.assert_array_equal(kept["patch_00001"], bicubic_upsample(samples[1].lr.data, 4))
        frame = report.to_frame()
        assert list(frame.columns) == ["image", "PSNR", "SAM", "ERGAS", "SSIM"]
        summary = report.summary()
        assert summary["PSNR"].mean == pytest.approx(frame["PSNR"].mean())
        assert summary["PSNR"].std == pytest.approx(frame["PSNR"].std(ddof=0))

    def test_parallel_keeps_order(self, samples):
        serial = evaluate_bicubic(samples, 4, workers=1)
        parallel = evaluate_bicubic(samples, 4, workers=3)
        assert [m.model_dump() for m in parallel.images] == [m.model_dump() for m in serial.images]

    def test_triples_named_by_position(self, samples):
        triples = [(s.lr, s.msi, s.gt.data) for s in samples]
        report = evaluate_bicubic(triples, 4)
        assert [m.image for m in report.images] == [s.name for s in samples]
        expected = evaluate_bicubic(samples, 4)
        assert [m.model_dump() for m in report.images] == [m.model_dump() for m in expected.images]

    def test_model_report(self, samples):
        from inffusion.schemas.configs import FusionConfig, ModelConfig

        arch = ModelConfig(bands=4, msi_bands=3, fusion=FusionConfig(d1=2, d2=2, c=2, r=4),
                           spectral_depth=1, spatial_depth=1)
        params = init_params(arch).zero_()
        report = evaluate_model(samples, params)
        baseline = evaluate_bicubic(samples, 4)
        assert report.param_count == params.count()
        for m, b in zip(report.images, baseline.images):
            assert m.psnr == pytest.approx(b.psnr, abs=1e-12)

    def test_text_and_csv(self, samples, tmp_path):
        report = evaluate_bicubic(samples, 4)
        text = report.to_text()
        assert "PSNR" in text and "#params 0" in text
        path = report.to_csv(str(tmp_path / "m.csv"))
        assert open(path).readline().strip() == "image,PSNR,SAM,ERGAS,SSIM"

    def test_infinite_psnr_excluded_from_mean(self):
        report = MetricsReport(images=[
            ImageMetrics(image="a", psnr=math.inf, sam=0, ergas=0, ssim=1, psnr_infinite=True),
            ImageMetrics(image="b", psnr=30.0, sam=1, ergas=1, ssim=0.9),
        ])
        assert report.summary()["PSNR"].mean == 30.0
        assert report.infinite_psnr_count == 1
        assert "infinite PSNR" in report.to_text()
