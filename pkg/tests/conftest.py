import os

# ledger and logging settings must be in place before inffusion.config is imported
os.environ["DATABASE_URL"] = "sqlite://"
os.environ["LEDGER_ENABLED"] = "True"
os.environ["LOG_COLORED"] = "False"
os.environ["LOGTAIL_TOKEN"] = ""
os.environ["EVAL_WORKERS"] = "1"

import numpy as np
import pytest

from inffusion.core.cube import HsiCube
from inffusion.schemas.configs import FusionConfig, ModelConfig, TrainConfig
from inffusion.services.simulation_service import default_srf, make_synthetic_scene, simulate_pair


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_fusion():
    return FusionConfig(d1=4, d2=4, c=4, r=2)


@pytest.fixture
def tiny_arch(tiny_fusion):
    """S=3, s=1 network small enough for finite differences"""
    return ModelConfig(bands=3, msi_bands=1, fusion=tiny_fusion, spectral_depth=2, spatial_depth=2)


@pytest.fixture
def tiny_pair(rng):
    """(LR-HSI 4x4x3, HR-MSI 8x8x1, GT 8x8x3)"""
    gt = rng.uniform(0.1, 0.9, size=(8, 8, 3))
    lr = gt.reshape(4, 2, 4, 2, 3).mean(axis=(1, 3))
    msi = gt.mean(axis=-1, keepdims=True)
    return lr, msi, gt


@pytest.fixture
def small_train_config():
    network = ModelConfig(fusion=FusionConfig(d1=4, d2=4, c=4, r=4), spectral_depth=1, spatial_depth=1)
    return TrainConfig(lr=1e-3, epochs=2, seed=0, network=network)


@pytest.fixture
def synthetic_sample():
    """One simulated 16x16x5 patch at r=4"""
    gt = make_synthetic_scene(16, 16, bands=5, seed=3)
    lr, msi = simulate_pair(gt, default_srf(gt.wavelengths), r=4)
    return lr, msi, gt


@pytest.fixture
def write_cube(tmp_path):
    from inffusion.integrations.cube_io import save_cube

    def _write(data, name="cube.cube", wavelengths=None):
        return save_cube(HsiCube(data, wavelengths), tmp_path / name)

    return _write
