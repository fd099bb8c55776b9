import logging
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from inffusion.core import ops
from inffusion.core.checkpoint import save_checkpoint
from inffusion.core.cube import HsiCube
from inffusion.core.infn import ModelParams, forward, init_params
from inffusion.core.optim import Adam
from inffusion.core.tensor import Tensor
from inffusion.errors import DataShapeError, MissingInputError, ShapeError
from inffusion.schemas.configs import ModelConfig, TrainConfig
from inffusion.services.simulation_service import Sample, SampleLike
from inffusion.utils.logging import log_function_call, log_run_progress, log_training_step

logger = logging.getLogger(__name__)

Triple = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class LossRecord:
    step: int
    epoch: int
    loss: float


@dataclass
class TrainResult:
    params: ModelParams
    history: List[LossRecord] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)

    def losses(self) -> List[float]:
        return [h.loss for h in self.history]

    def history_frame(self) -> pd.DataFrame:
        return history_frame(self.history)


def history_frame(history: Sequence[LossRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        {"step": [h.step for h in history], "epoch": [h.epoch for h in history],
         "loss": [h.loss for h in history]},
        columns=["step", "epoch", "loss"],
    )


def save_loss_csv(history: Sequence[LossRecord], path: str) -> str:
    history_frame(history).to_csv(path, index=False, float_format="%.17g")
    return path


def _as_triple(item: SampleLike) -> Triple:
    if isinstance(item, Sample):
        return item.arrays()
    lr, msi, gt = item
    return tuple(x.data if isinstance(x, HsiCube) else np.asarray(x, dtype=np.float64) for x in (lr, msi, gt))


def resolve_architecture(triples: Sequence[Triple], network: ModelConfig) -> ModelConfig:
    """Check the pairs against each other and the configured network; fill in band counts"""
    if not triples:
        raise MissingInputError("training needs at least one (LR-HSI, HR-MSI, GT) triple")
    ref = [t.shape for t in triples[0]]
    for k, triple in enumerate(triples[1:], start=1):
        for part, (a, b) in zip(("lr", "msi", "gt"), zip(ref, (t.shape for t in triple))):
            if a != b:
                raise DataShapeError(f"pair {k} {part} is {b}, pair 0 has {a}",
                                     axis=part, expected=list(a), got=list(b))
    (h, w, bands), (H, W, msi_bands), gt_shape = ref
    if gt_shape != (H, W, bands):
        raise DataShapeError(f"ground truth {gt_shape} does not match ({H}, {W}, {bands})", axis="gt")
    r = network.fusion.r
    if (H, W) != (r * h, r * w):
        raise ShapeError(f"HR {H}x{W} is not r={r} times LR {h}x{w}", axis="r", r=r)
    for name, configured, found in (("bands", network.bands, bands), ("msi_bands", network.msi_bands, msi_bands)):
        if configured is not None and configured != found:
            raise DataShapeError(f"network expects {name}={configured}, data has {found}",
                                 axis=name, expected=configured, got=found)
    return network.with_bands(bands, msi_bands)


def batch_loss(params: ModelParams, batch: Sequence[Triple], reduction: str = "mean") -> Tensor:
    """Mean over the batch of the per-pair L1 loss"""
    total = None
    for lr, msi, gt in batch:
        loss = ops.l1_loss(forward(Tensor(lr), Tensor(msi), params), gt, reduction)
        total = loss if total is None else ops.add(total, loss)
    return ops.mul(total, 1.0 / len(batch))


def train_step(params: ModelParams, optimizer: Adam, batch: Sequence[Triple], reduction: str = "mean") -> float:
    loss = batch_loss(params, batch, reduction)
    loss.backward()
    optimizer.step()
    optimizer.zero_grad()
    return loss.item()


@log_function_call
def train(
    pairs: Sequence[SampleLike],
    cfg: TrainConfig,
    checkpoint_dir: Optional[str] = None,
    run_id: str = "train",
) -> TrainResult:
    """
    Seeded Adam/L1 loop: shuffle every epoch, step per batch, checkpoint every
    `cfg.checkpoint_every` steps into `checkpoint_dir`. Equal seeds give equal runs.
    """
    triples = [_as_triple(p) for p in pairs]
    arch = resolve_architecture(triples, cfg.network)
    params = init_params(arch, cfg.seed)
    optimizer = Adam(params.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    result = TrainResult(params)

    log_run_progress(run_id, "train", f"{len(triples)} pair(s), {cfg.epochs} epoch(s), "
                                      f"{params.count()} parameters, lr={cfg.lr}")
    step = 0
    limit = cfg.max_steps
    for epoch in range(cfg.epochs):
        if limit is not None and step >= limit:
            break
        order = shuffle_rng.permutation(len(triples))
        for start in range(0, len(order), cfg.batch_size):
            if limit is not None and step >= limit:
                break
            started = time.perf_counter()
            batch = [triples[i] for i in order[start:start + cfg.batch_size]]
            loss = train_step(params, optimizer, batch, cfg.loss_reduction)
            step += 1
            result.history.append(LossRecord(step, epoch, loss))
            log_training_step(step, epoch, loss, time.perf_counter() - started)
            if checkpoint_dir and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                path = os.path.join(checkpoint_dir, f"step_{step:06d}.ckpt")
                result.checkpoints.append(save_checkpoint(params, path))

    if result.history:
        log_run_progress(run_id, "train", f"finished {step} step(s): loss "
                                          f"{result.history[0].loss:.6f} -> {result.history[-1].loss:.6f}")
    else:
        log_run_progress(run_id, "train", "no steps taken, returning initialized parameters")
    return result
