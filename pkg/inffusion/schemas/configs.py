from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from inffusion.core.kernels import LogitMode


class WeightMode(str, Enum):
    """Interpolation weight generator"""
    AREA = "area"
    COSINE = "cosine"


class Upsampler(str, Enum):
    """Stage that lifts LR features to the HR raster"""
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"
    PIXEL_SHUFFLE = "pixel_shuffle"
    INF3 = "inf3"


class FusionConfig(BaseModel):
    """Widths, scale and ablation switches of the fusion function"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    d1: int = Field(64, ge=1, description="Spectral feature width")
    d2: int = Field(64, ge=1, description="Spatial feature width")
    c: int = Field(64, ge=1, description="Fused feature width")
    r: int = Field(4, ge=1, description="Scaling factor")
    use_lr_injection: bool = True
    use_hr_injection: bool = True
    use_rel_coord: bool = True
    weight_mode: WeightMode = WeightMode.COSINE
    logit_mode: LogitMode = LogitMode.DOT
    mlp_depth: int = Field(1, ge=1, le=2, description="1: affine, 2: affine-relu-affine")

    @property
    def f1_width(self) -> int:
        return self.d1 + (self.d2 if self.use_lr_injection else 0)

    @property
    def mlp_in_width(self) -> int:
        return (
            self.d1
            + (self.d2 if self.use_lr_injection else 0)
            + (self.d2 if self.use_hr_injection else 0)
            + (2 if self.use_rel_coord else 0)
        )


class ModelConfig(BaseModel):
    """Architecture descriptor of the whole network"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    bands: Optional[int] = Field(None, ge=1, description="LR-HSI band count S")
    msi_bands: Optional[int] = Field(None, ge=1, description="HR-MSI band count s")
    fusion: FusionConfig = FusionConfig()
    spectral_depth: int = Field(2, ge=1)
    spatial_depth: int = Field(2, ge=1)
    kernel_size: int = Field(3, ge=1)
    decoder_kernel: int = Field(3, ge=1)
    decoder_activation: bool = True
    upsampler: Upsampler = Upsampler.INF3

    @model_validator(mode="after")
    def _odd_kernels(self):
        if self.kernel_size % 2 == 0 or self.decoder_kernel % 2 == 0:
            raise ValueError("kernel sizes must be odd")
        return self

    @property
    def mlp_in_width(self) -> int:
        """Fusion MLP input width; resampling upsamplers carry no relative coordinate"""
        f = self.fusion
        if self.upsampler is Upsampler.INF3:
            return f.mlp_in_width
        return f.f1_width + (f.d2 if f.use_hr_injection else 0)

    def with_bands(self, bands: int, msi_bands: int, r: Optional[int] = None) -> "ModelConfig":
        fusion = self.fusion if r is None else self.fusion.model_copy(update={"r": r})
        return self.model_copy(update={"bands": bands, "msi_bands": msi_bands, "fusion": fusion})


class TrainConfig(BaseModel):
    """Optimization settings plus the network to train"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(1e-4, gt=0)
    epochs: int = Field(1, ge=0)
    batch_size: int = Field(1, ge=1)
    seed: int = 0
    loss_reduction: str = Field("mean", pattern="^(mean|sum)$")
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    max_steps: Optional[int] = Field(None, ge=0)
    checkpoint_every: int = Field(0, ge=0, description="Steps between checkpoints, 0 disables")
    network: ModelConfig = ModelConfig()

    @property
    def fusion(self) -> FusionConfig:
        return self.network.fusion
