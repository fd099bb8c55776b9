"""
Ablation driver: one seeded training run per setting of an axis, each scored on
the same evaluation samples, reported as one row per arm in a fixed order.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from inffusion.errors import UnknownModeError
from inffusion.schemas.configs import FusionConfig, ModelConfig, TrainConfig
from inffusion.schemas.reports import AblationRow, AblationTable
from inffusion.services.evaluation_service import evaluate_model
from inffusion.services.simulation_service import SampleLike, as_sample
from inffusion.services.training_service import train
from inffusion.utils.logging import log_function_call, log_run_progress

logger = logging.getLogger(__name__)

Arm = Tuple[str, Dict[str, Any]]

AXES: Dict[str, List[Arm]] = {
    "dual_freq": [
        ("LR only", {"use_lr_injection": True, "use_hr_injection": False}),
        ("HR only", {"use_lr_injection": False, "use_hr_injection": True}),
        ("LR + HR", {"use_lr_injection": True, "use_hr_injection": True}),
    ],
    "rel_coord": [
        ("w/o relative coordinate", {"use_rel_coord": False}),
        ("w/ relative coordinate", {"use_rel_coord": True}),
    ],
    "weight_mode": [
        ("area", {"weight_mode": "area"}),
        ("cosine", {"weight_mode": "cosine"}),
    ],
    "upsampler": [
        ("bilinear", {"upsampler": "bilinear"}),
        ("bicubic", {"upsampler": "bicubic"}),
        ("pixel_shuffle", {"upsampler": "pixel_shuffle"}),
        ("inf3", {"upsampler": "inf3"}),
    ],
}

FOOTERS = {
    "weight_mode": "network-generated weights are not part of this comparison",
}

NETWORK_KEYS = {"upsampler"}


def axis_names() -> List[str]:
    return list(AXES)


def arm_config(base: TrainConfig, settings: Dict[str, Any]) -> TrainConfig:
    """Base config with one arm's switches applied (validated)"""
    fusion_updates = {k: v for k, v in settings.items() if k not in NETWORK_KEYS}
    network_updates = {k: v for k, v in settings.items() if k in NETWORK_KEYS}
    fusion = FusionConfig.model_validate({**base.network.fusion.model_dump(), **fusion_updates})
    network = ModelConfig.model_validate({**base.network.model_dump(), **network_updates, "fusion": fusion})
    return base.model_copy(update={"network": network})


@log_function_call
def run_ablation(
    axis: str,
    base: TrainConfig,
    train_samples: Sequence[SampleLike],
    eval_samples: Optional[Sequence[SampleLike]] = None,
    workers: Optional[int] = None,
    run_id: str = "ablate",
) -> AblationTable:
    if axis not in AXES:
        raise UnknownModeError(f"unknown ablation axis {axis!r}; choose from {', '.join(AXES)}", mode=axis)
    train_samples = [as_sample(s, k) for k, s in enumerate(train_samples)]
    eval_samples = [as_sample(s, k) for k, s in enumerate(eval_samples)] if eval_samples else train_samples
    table = AblationTable(axis=axis, footer=FOOTERS.get(axis))
    for label, settings in AXES[axis]:
        cfg = arm_config(base, settings)
        log_run_progress(run_id, f"ablate:{axis}", f"arm {label!r}")
        result = train(train_samples, cfg, run_id=run_id)
        report = evaluate_model(eval_samples, result.params, workers=workers, model=label)
        table.rows.append(AblationRow(label=label, settings=settings,
                                      param_count=result.params.count(), report=report))
    logger.info(f"Ablation {axis}: {len(table.rows)} arm(s) done")
    return table


def run_ablations(
    axes: Sequence[str],
    base: TrainConfig,
    train_samples: Sequence[SampleLike],
    eval_samples: Optional[Sequence[SampleLike]] = None,
    workers: Optional[int] = None,
    run_id: str = "ablate",
) -> List[AblationTable]:
    if "all" in axes:
        axes = axis_names()
    return [run_ablation(a, base, train_samples, eval_samples, workers, run_id) for a in axes]
