import math
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

METRIC_COLUMNS = ["PSNR", "SAM", "ERGAS", "SSIM"]


class RunStatus(str, Enum):
    """Run status enumeration"""
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class ImageMetrics(BaseModel):
    """Quality indices of one fused image against its ground truth"""
    image: str
    psnr: float = Field(..., description="dB; +inf when the images are identical")
    sam: float = Field(..., ge=0.0, le=180.0, description="Mean spectral angle in degrees")
    ergas: float = Field(..., ge=0.0)
    ssim: float = Field(..., ge=-1.0, le=1.0)
    psnr_infinite: bool = False
    sam_skipped_pixels: int = 0
    ergas_skipped_bands: int = 0

    def row(self) -> Dict[str, Any]:
        return {"image": self.image, "PSNR": self.psnr, "SAM": self.sam, "ERGAS": self.ergas, "SSIM": self.ssim}


class MetricSummary(BaseModel):
    mean: float
    std: float


class MetricsReport(BaseModel):
    """Per-image metrics plus mean and (population) standard deviation per column"""
    model: str = "INFN"
    param_count: int = 0
    images: List[ImageMetrics] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([m.row() for m in self.images], columns=["image"] + METRIC_COLUMNS)
        return frame

    def summary(self) -> Dict[str, MetricSummary]:
        frame = self.to_frame()[METRIC_COLUMNS].replace([np.inf, -np.inf], np.nan)
        out = {}
        for col in METRIC_COLUMNS:
            values = frame[col].dropna()
            mean = float(values.mean()) if len(values) else math.inf
            std = float(values.std(ddof=0)) if len(values) else 0.0
            out[col] = MetricSummary(mean=mean, std=std)
        return out

    @property
    def infinite_psnr_count(self) -> int:
        return sum(1 for m in self.images if m.psnr_infinite)

    def to_csv(self, path: str) -> str:
        self.to_frame().to_csv(path, index=False, float_format="%.6f")
        return path

    def to_text(self) -> str:
        frame = self.to_frame()
        summary = self.summary()
        lines = [frame.to_string(index=False, float_format=lambda v: f"{v:.4f}")]
        lines.append("")
        lines.append("  ".join(f"{c} {s.mean:.4f} ± {s.std:.4f}" for c, s in summary.items()))
        lines.append(f"#params {self.param_count}")
        if self.infinite_psnr_count:
            lines.append(f"{self.infinite_psnr_count} image(s) with infinite PSNR excluded from the PSNR mean")
        return "\n".join(lines)


class AblationRow(BaseModel):
    """One arm of an ablation: its label, switch settings and averaged metrics"""
    label: str
    settings: Dict[str, Any]
    param_count: int
    report: MetricsReport

    def flat(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"setting": self.label}
        for col, s in self.report.summary().items():
            row[col] = s.mean
            row[f"{col}_std"] = s.std
        row["params"] = self.param_count
        return row


class AblationTable(BaseModel):
    axis: str
    rows: List[AblationRow] = Field(default_factory=list)
    footer: Optional[str] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.flat() for r in self.rows])

    def to_csv(self, path: str) -> str:
        self.to_frame().to_csv(path, index=False, float_format="%.6f")
        return path

    def to_text(self) -> str:
        frame = self.to_frame()
        shown = pd.DataFrame({"setting": frame["setting"]})
        for col in METRIC_COLUMNS:
            shown[col] = [f"{m:.4f} ± {s:.4f}" for m, s in zip(frame[col], frame[f"{col}_std"])]
        shown["#params"] = frame["params"]
        text = f"[{self.axis}]\n" + shown.to_string(index=False)
        if self.footer:
            text += f"\n{self.footer}"
        return text


class RunManifest(BaseModel):
    """Everything needed to replay one CLI run"""
    run_id: str
    command: str
    argv: List[str] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    inputs: List[str] = Field(default_factory=list)
    input_hash: Optional[str] = Field(None, description="git-style content hash of the inputs")
    outputs: List[str] = Field(default_factory=list)
    extra: Dict[str, Any] = Field(default_factory=dict)
    status: RunStatus = RunStatus.RUNNING
    error_code: Optional[str] = None
    error_message: Optional[str] = None
    started_at: datetime
    finished_at: Optional[datetime] = None
    app_version: str = ""
