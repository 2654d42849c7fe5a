"""
Supervised training schedule: mini-batch AdamW epochs with early stopping,
run as source pre-training followed by target fine-tuning.
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import torch

from config.settings import RunConfig
from dataio.dataset import CityData
from dataio.windows import WindowSample, stack_windows
from gradcore.autodiff import forward_backward
from gradcore.optim import OptimizerState, adamw_step, clip_global_norm, create_optimizer
from graphcore.context import GraphContext
from predict.model import MCPSTModel
from utils.errors import InsufficientDataError
from utils.logger import get_logger
from utils.rng import XorShiftRNG

logger = get_logger(__name__)

TRAIN_LOG_COLUMNS = ["epoch", "stage", "train_loss", "val_loss", "task", "phase", "meta"]


class EarlyStopping:
    """
    Stop once ``patience`` epochs pass without the monitored loss dropping by
    more than ``min_delta``; keeps a copy of the best parameters.
    """

    def __init__(self, patience: int = 20, min_delta: float = 1e-5):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = float("inf")
        self.best_epoch = -1
        self.best_state: Optional[Dict[str, torch.Tensor]] = None
        self.stale_epochs = 0

    def step(self, loss: float, epoch: int, model: Optional[torch.nn.Module] = None) -> bool:
        """Record one epoch; returns True when training should stop."""
        if loss < self.best_loss - self.min_delta:
            self.best_loss = loss
            self.best_epoch = epoch
            self.stale_epochs = 0
            if model is not None:
                self.best_state = copy.deepcopy(model.state_dict())
            return False
        self.stale_epochs += 1
        return self.stale_epochs >= self.patience

    def restore(self, model: torch.nn.Module) -> None:
        if self.best_state is not None:
            model.load_state_dict(self.best_state)


@dataclass
class StageResult:
    stage: str
    optimizer: OptimizerState
    records: List[list] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: Optional[int] = None


def holdout_split(
    windows: Sequence[WindowSample], fraction: float
) -> Tuple[List[WindowSample], List[WindowSample]]:
    """Chronological split: the last ``fraction`` of windows (at least one) is held out."""
    if len(windows) < 2:
        raise InsufficientDataError(
            f"need at least 2 windows to hold out a validation slice, got {len(windows)}"
        )
    held = min(len(windows) - 1, max(1, int(round(len(windows) * fraction))))
    return list(windows[:-held]), list(windows[-held:])


def _batches(windows: Sequence[WindowSample], batch_size: int, order: Sequence[int]):
    for start in range(0, len(order), batch_size):
        yield [windows[i] for i in order[start:start + batch_size]]


@torch.no_grad()
def evaluate_loss(
    model: MCPSTModel, windows: Sequence[WindowSample], context: GraphContext, batch_size: int
) -> float:
    """Window-weighted mean total loss in evaluation mode."""
    was_training = model.training
    model.eval()
    total = 0.0
    for batch in _batches(windows, batch_size, range(len(windows))):
        x, y = stack_windows(batch)
        total += float(model.loss(x, y, context).total) * len(batch)
    model.train(was_training)
    return total / len(windows)


def train_stage(
    model: MCPSTModel,
    train_windows: Sequence[WindowSample],
    val_windows: Sequence[WindowSample],
    context: GraphContext,
    cfg: RunConfig,
    stage: str,
    lr: float,
    epochs: int,
    rng: XorShiftRNG,
    opt: Optional[OptimizerState] = None,
) -> StageResult:
    """
    Run up to ``epochs`` shuffled mini-batch epochs with early stopping on
    ``val_windows`` and restore the best parameters at the end.
    """
    if opt is None:
        opt = create_optimizer(
            model.named_parameters(), lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay
        )
    result = StageResult(stage=stage, optimizer=opt)
    if epochs == 0:
        logger.info(f"Stage {stage}: zero epochs, model unchanged")
        return result
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    generator = torch.Generator().manual_seed(rng.torch_seed())
    logger.info(
        f"Stage {stage}: {len(train_windows)} training windows, "
        f"{len(val_windows)} held out, lr={lr}"
    )
    model.train()
    for epoch in range(epochs):
        order = rng.permutation(len(train_windows)).tolist()
        epoch_total, epoch_task, epoch_phase = 0.0, 0.0, 0.0
        for batch in _batches(train_windows, cfg.batch_size, order):
            x, y = stack_windows(batch)
            _, breakdown = forward_backward(model, lambda: model.loss(x, y, context, generator))
            clip_global_norm(model.named_parameters(), cfg.clip_tau)
            adamw_step(model.named_parameters(), opt)
            epoch_total += float(breakdown.total) * len(batch)
            epoch_task += float(breakdown.task) * len(batch)
            epoch_phase += float(breakdown.phase) * len(batch)
        count = len(train_windows)
        val_loss = evaluate_loss(model, val_windows, context, cfg.batch_size)
        train_loss = epoch_total / count
        result.records.append(
            [epoch, stage, train_loss, val_loss, epoch_task / count, epoch_phase / count, 0.0]
        )
        logger.debug(f"Stage {stage} epoch {epoch}: train {train_loss:.6f} val {val_loss:.6f}")
        if stopper.step(val_loss, epoch, model):
            result.stopped_epoch = epoch
            logger.info(f"Stage {stage}: early stop at epoch {epoch} (best {stopper.best_epoch})")
            break
    stopper.restore(model)
    result.best_epoch = stopper.best_epoch
    return result


@dataclass
class TrainingResult:
    model: MCPSTModel
    optimizer: OptimizerState
    log: pd.DataFrame
    stages: List[StageResult]


def write_training_log(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def two_stage_train(
    model: MCPSTModel,
    source: CityData,
    target: Optional[CityData],
    cfg: RunConfig,
    rng: XorShiftRNG,
    log_path: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """
    Pre-train on the source city's training split, then fine-tune on the target
    adaptation split when a target is given. Each stage holds out the last
    ``val_fraction`` of its windows for early stopping.
    """
    stages = []
    train, held = holdout_split(source.windows("train"), cfg.val_fraction)
    stages.append(
        train_stage(
            model,
            train,
            held,
            source.context,
            cfg,
            "pretrain",
            cfg.pretrain_lr,
            cfg.pretrain_epochs,
            rng.spawn(1),
        )
    )
    if target is not None:
        adapt, held = holdout_split(target.windows("adapt"), cfg.val_fraction)
        stages.append(
            train_stage(
                model,
                adapt,
                held,
                target.context,
                cfg,
                "finetune",
                cfg.finetune_lr,
                cfg.finetune_epochs,
                rng.spawn(2),
            )
        )
    rows = [row for stage in stages for row in stage.records]
    frame = pd.DataFrame(rows, columns=TRAIN_LOG_COLUMNS)
    if log_path is not None:
        write_training_log(frame, log_path)
    return TrainingResult(model=model, optimizer=stages[-1].optimizer, log=frame, stages=stages)
