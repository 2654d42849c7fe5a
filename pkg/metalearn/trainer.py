"""
First-order meta-learning.

The inner loop adapts a copy θ′ of the model with plain gradient descent on
the support loss (ℒ_task + λ₁ℒ_phase). The outer step evaluates the query
loss at θ′, averages those gradients over the episodes of a meta-batch in
order, and applies them to θ with AdamW. No gradient flows through the inner
loop.
"""

import copy
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
import torch

from config.settings import RunConfig
from dataio.windows import WindowSample, stack_windows
from gradcore.autodiff import forward_backward
from gradcore.optim import OptimizerState, adamw_step, clip_global_norm, create_optimizer, sgd_step
from graphcore.context import GraphContext
from metalearn.episodes import Episode, ScenarioPool
from predict.losses import LossBreakdown
from predict.model import MCPSTModel
from utils.errors import NonFiniteError
from utils.logger import get_logger
from utils.rng import XorShiftRNG

logger = get_logger(__name__)

META_LOG_COLUMNS = ["step", "query_loss", "task", "phase", "episodes", "skipped"]


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 5e-4
    outer_lr: float = 1e-4
    inner_steps: int = 5
    eval_inner_steps: int = 15
    support_size: int = 12
    query_size: int = 16
    meta_steps: int = 100
    meta_batch: int = 4
    clip_tau: float = 1.0
    lambda2: float = 1.0

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "MetaConfig":
        return cls(
            inner_lr=cfg.inner_lr,
            outer_lr=cfg.outer_lr,
            inner_steps=cfg.inner_steps,
            eval_inner_steps=cfg.eval_inner_steps,
            support_size=cfg.support_size,
            query_size=cfg.query_size,
            meta_steps=cfg.meta_steps,
            meta_batch=cfg.meta_batch,
            clip_tau=cfg.clip_tau,
            lambda2=cfg.lambda2,
        )


@dataclass
class MetaStepResult:
    query_loss: float
    task: float
    phase: float
    episodes: int
    skipped: List[str] = field(default_factory=list)


def batch_loss(model: MCPSTModel, samples: Sequence[WindowSample], context: GraphContext,
               generator: Optional[torch.Generator] = None) -> LossBreakdown:
    x, y = stack_windows(samples)
    return model.loss(x, y, context, generator)


def _generator(rng: Optional[XorShiftRNG]) -> Optional[torch.Generator]:
    return torch.Generator().manual_seed(rng.torch_seed()) if rng is not None else None


def inner_adapt(
    model: MCPSTModel,
    episode: Episode,
    cfg: MetaConfig,
    rng: Optional[XorShiftRNG] = None,
    steps: Optional[int] = None,
) -> MCPSTModel:
    """
    θ′ after ``steps`` clipped gradient-descent steps on the support set.

    ``steps`` defaults to ``cfg.inner_steps``.

    ``model`` is never modified.

    Raises:
        NonFiniteError: the support loss or a gradient went non-finite
    """
    adapted = copy.deepcopy(model)
    generator = _generator(rng)
    for _ in range(cfg.inner_steps if steps is None else steps):
        forward_backward(
            adapted, lambda: batch_loss(adapted, episode.support, episode.context, generator)
        )
        clip_global_norm(adapted.named_parameters(), cfg.clip_tau)
        sgd_step(adapted.named_parameters(), cfg.inner_lr)
    return adapted


def episode_stream(episode: Episode) -> int:
    """Stream id keyed on scenario and window starts, so equal episodes draw equal dropout."""
    key = ",".join(
        [episode.scenario_id]
        + [str(w.start_index) for w in episode.support]
        + ["|"]
        + [str(w.start_index) for w in episode.query]
    )
    return zlib.crc32(key.encode("utf-8"))


def outer_update(
    model: MCPSTModel,
    episodes: Sequence[Episode],
    cfg: MetaConfig,
    opt: OptimizerState,
    rng: Optional[XorShiftRNG] = None,
) -> MetaStepResult:
    """
    One first-order meta-step on θ.

    Episodes whose adaptation or query loss is non-finite are skipped and named
    in the result; when every episode fails θ is left unchanged.
    """
    names = [name for name, p in model.named_parameters() if p.requires_grad]
    summed: Dict[str, torch.Tensor] = {}
    losses: List[LossBreakdown] = []
    skipped: List[str] = []
    for index, episode in enumerate(episodes):
        episode_rng = rng.spawn(episode_stream(episode)) if rng is not None else None
        try:
            adapted = inner_adapt(model, episode, cfg, episode_rng)
            generator = _generator(episode_rng)
            _, breakdown = forward_backward(
                adapted, lambda: batch_loss(adapted, episode.query, episode.context, generator)
            )
        except NonFiniteError as exc:
            logger.warning(f"Episode {episode.scenario_id or index} aborted: {exc}")
            skipped.append(episode.scenario_id or str(index))
            continue
        grads = dict(adapted.named_parameters())
        for name in names:
            grad = grads[name].grad.detach()
            summed[name] = grad.clone() if name not in summed else summed[name] + grad
        losses.append(breakdown)

    if not losses:
        nan = float("nan")
        return MetaStepResult(query_loss=nan, task=nan, phase=nan, episodes=0, skipped=skipped)

    scale = cfg.lambda2 / len(losses)
    for name, param in model.named_parameters():
        if name in summed:
            param.grad = summed[name] * scale
    clip_global_norm(model.named_parameters(), cfg.clip_tau)
    adamw_step(model.named_parameters(), opt)
    count = len(losses)
    return MetaStepResult(
        query_loss=sum(float(b.total) for b in losses) / count,
        task=sum(float(b.task) for b in losses) / count,
        phase=sum(float(b.phase) for b in losses) / count,
        episodes=count,
        skipped=skipped,
    )


def meta_optimizer(model: MCPSTModel, cfg: MetaConfig, run: RunConfig) -> OptimizerState:
    return create_optimizer(
        model.named_parameters(),
        cfg.outer_lr,
        run.beta1,
        run.beta2,
        run.adam_eps,
        run.weight_decay,
    )


def meta_train(
    model: MCPSTModel,
    pool: ScenarioPool,
    run: RunConfig,
    rng: XorShiftRNG,
    log_path: Optional[Union[str, Path]] = None,
    opt: Optional[OptimizerState] = None,
):
    """
    ``meta_steps`` outer updates, each on ``meta_batch`` freshly sampled episodes.

    Returns:
        (optimizer state, episode log frame)
    """
    cfg = MetaConfig.from_run_config(run)
    opt = opt if opt is not None else meta_optimizer(model, cfg, run)
    rows = []
    logger.info(
        f"Meta-training: {cfg.meta_steps} steps × {cfg.meta_batch} episodes "
        f"over {len(pool)} cities"
    )
    for step in range(cfg.meta_steps):
        step_rng = rng.spawn(step)
        episodes = [
            pool.sample(cfg.support_size, cfg.query_size, step_rng) for _ in range(cfg.meta_batch)
        ]
        result = outer_update(model, episodes, cfg, opt, step_rng)
        skipped = len(result.skipped)
        rows.append([step, result.query_loss, result.task, result.phase, result.episodes, skipped])
        logger.debug(f"Meta-step {step}: query loss {result.query_loss:.6f}")
    frame = pd.DataFrame(rows, columns=META_LOG_COLUMNS)
    if log_path is not None:
        frame.to_csv(log_path, index=False, lineterminator="\n", float_format="%.10g")
    if rows:
        logger.info(f"Meta-training done: final query loss {rows[-1][1]:.6f}")
    return opt, frame


@torch.no_grad()
def query_mae(model: MCPSTModel, samples: Sequence[WindowSample], context: GraphContext) -> float:
    """Mean |ŷ − y| of the consensus forecast, normalized units, evaluation mode."""
    was_training = model.training
    model.eval()
    x, y = stack_windows(samples)
    mae = float((model(x, context).prediction - y).abs().mean())
    model.train(was_training)
    return mae


def adaptation_curve(
    model: MCPSTModel,
    episode: Episode,
    steps: int,
    cfg: MetaConfig,
    rng: Optional[XorShiftRNG] = None,
) -> List[float]:
    """Query MAE after 0, 1, ..., ``steps`` inner steps; ``model`` is not modified."""
    adapted = copy.deepcopy(model)
    curve = [query_mae(adapted, episode.query, episode.context)]
    for step in range(steps):
        step_rng = rng.spawn(step) if rng is not None else None
        adapted = inner_adapt(adapted, episode, cfg, step_rng, steps=1)
        curve.append(query_mae(adapted, episode.query, episode.context))
    return curve
