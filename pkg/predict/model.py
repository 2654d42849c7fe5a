"""
MCPST model: phase modules, consensus fusion, multi-scale encoder, horizon
heads and neural consensus wired into one forward pass, plus model-file
save/load.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from config.settings import RunConfig, build_run_config, dump_run_config, parse_key_values
from diffengine.engine import DiffusionConfig, DiffusionPhase, DiffusionState
from encoder.multiscale import EncoderConfig, MultiScaleEncoder
from fusion.consensus import ConsensusFusion, PhaseBundle
from gradcore.autodiff import DTYPE
from gradcore.checkpoint import (
    ModelState,
    capture_state,
    load_state,
    restore_parameters,
    save_state,
)
from gradcore.init import initialize_parameters
from gradcore.optim import OptimizerState
from dataio.windows import WindowSample, stack_windows
from graphcore.context import GraphContext
from predict.heads import BETA_INIT, ForecastOutput, HorizonHeads, neural_consensus
from predict.losses import (
    LossBreakdown,
    js_divergence,
    phase_loss,
    simplex_penalty,
    task_loss,
    total_loss,
)
from specengine.engine import SpectralPhase
from syncengine.engine import PhaseState, SyncConfig, SyncPhase, order_parameter
from utils.errors import CheckpointError, InsufficientDataError, ShapeError
from utils.logger import get_logger
from utils.rng import XorShiftRNG

logger = get_logger(__name__)


@dataclass
class ModelOutput:
    """Everything one forward pass produces."""

    forecast: ForecastOutput
    bundle: PhaseBundle
    alpha: torch.Tensor
    phase_state: Optional[PhaseState]
    diffusion_state: Optional[DiffusionState]

    @property
    def prediction(self) -> torch.Tensor:
        return self.forecast.consensus

    def order_parameter(self) -> Optional[torch.Tensor]:
        return order_parameter(self.phase_state) if self.phase_state is not None else None


def _zeros(*shape: int) -> torch.Tensor:
    return torch.zeros(*shape, dtype=DTYPE)


class MCPSTModel(nn.Module):
    """
    Full forecaster. Parameters do not depend on the number of nodes, so one
    model can be evaluated on any GraphContext whose spectrum keeps
    ``cfg.k_spectral`` eigenvectors.
    """

    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.cfg = cfg
        width = cfg.hidden
        self.input_embed = nn.Linear(cfg.history * cfg.input_channels, width, dtype=DTYPE)
        self.diff = DiffusionPhase(
            width,
            cfg.horizon,
            DiffusionConfig(
                k_steps=cfg.k_diff,
                kappa_bounds=(cfg.kappa_min, cfg.kappa_max),
                capacity_bounds=(cfg.capacity_min, cfg.capacity_max),
            ),
        )
        self.sync = SyncPhase(
            width,
            cfg.horizon,
            SyncConfig(k_steps=cfg.k_sync, dt=cfg.sync_dt,
                       gamma_global_bounds=(cfg.gamma_global_min, cfg.gamma_global_max)),
        )
        self.spec = SpectralPhase(cfg.k_spectral, width, cfg.horizon)
        self.fusion = ConsensusFusion(width)
        encoder_cfg = EncoderConfig(
            hidden=cfg.enc_hidden,
            scales=tuple(cfg.scales),
            heads=cfg.heads,
            layers=cfg.layers,
            ffn_mult=cfg.ffn_mult,
            keep_prob=1.0 - cfg.dropout,
            multiscale=cfg.use_multiscale,
        )
        self.enc = MultiScaleEncoder(cfg.input_channels, self.fusion.total_width, encoder_cfg)
        self.readout = nn.Linear(encoder_cfg.total_width, width, dtype=DTYPE)
        self.heads = HorizonHeads(width, cfg.horizon)
        self.beta_raw = nn.Parameter(torch.tensor(BETA_INIT, dtype=DTYPE))

    @property
    def beta_c(self) -> torch.Tensor:
        return torch.sigmoid(self.beta_raw)

    def enabled_phases(self, context: GraphContext) -> Tuple[bool, bool, bool]:
        use_spec = self.cfg.use_spectral and context.has_spectrum
        return self.cfg.use_diffusion, self.cfg.use_sync, use_spec

    def node_features(self, x: torch.Tensor) -> torch.Tensor:
        """F = W_in·vec(x[:, :, n, :]), B×N×D."""
        batch, steps, nodes, channels = x.shape
        if steps != self.cfg.history or channels != self.cfg.input_channels:
            raise ShapeError(f"input {tuple(x.shape)} does not match history {self.cfg.history} "
                             f"and {self.cfg.input_channels} channels")
        return self.input_embed(x.permute(0, 2, 1, 3).reshape(batch, nodes, steps * channels))

    def forward(
        self,
        x: torch.Tensor,
        context: GraphContext,
        generator: Optional[torch.Generator] = None,
        record_phases: bool = False,
    ) -> ModelOutput:
        """
        Args:
            x: B×L×N×C normalized input windows
            context: Graph operators for the N nodes
            generator: Dropout stream for training mode
            record_phases: Keep oscillator phases after every synchronization step

        Returns:
            ModelOutput with the consensus forecast in ``forecast.consensus``
        """
        if x.shape[2] != context.n_nodes:
            raise ShapeError(f"input has {x.shape[2]} nodes, graph has {context.n_nodes}")
        batch, nodes = x.shape[0], x.shape[2]
        width, horizon = self.cfg.hidden, self.cfg.horizon
        use_diff, use_sync, use_spec = self.enabled_phases(context)
        features = self.node_features(x)

        diffusion_state = None
        if use_diff:
            diffusion_state, v_diff = self.diff(features, context.lap_comb)
            f_diff = diffusion_state.t_state
        else:
            f_diff, v_diff = _zeros(batch, nodes, width), _zeros(batch, nodes, horizon)

        phase_state = None
        if use_sync:
            phase_state, v_sync, f_sync = self.sync(
                features, context.adjacency, record=record_phases
            )
        else:
            f_sync, v_sync = _zeros(batch, nodes, width + 2), _zeros(batch, nodes, horizon)

        if use_spec:
            spectral, v_spec = self.spec(context.eigvecs, context.gap, batch)
            f_spec = spectral.f_spec
        else:
            f_spec, v_spec = _zeros(batch, nodes, width // 4), _zeros(batch, nodes, horizon)

        bundle = PhaseBundle(
            f_diff=f_diff, f_sync=f_sync, f_spec=f_spec, v_diff=v_diff, v_sync=v_sync, v_spec=v_spec
        )
        weights, fused = self.fusion(
            bundle, enabled=(use_diff, use_sync, use_spec), adaptive=self.cfg.use_adaptive_fusion
        )

        h_mem = self.enc(x, bundle.concatenated, context.propagation, generator)
        forecast = self.heads(fused + self.readout(h_mem[:, -1]))
        forecast.consensus = neural_consensus(
            forecast.y_hat, v_diff, v_sync, v_spec, weights.alpha, self.beta_c
        )
        return ModelOutput(
            forecast=forecast,
            bundle=bundle,
            alpha=weights.alpha,
            phase_state=phase_state,
            diffusion_state=diffusion_state,
        )

    def loss(
        self,
        x: torch.Tensor,
        y: torch.Tensor,
        context: GraphContext,
        generator: Optional[torch.Generator] = None,
        meta: Union[torch.Tensor, float] = 0.0,
    ) -> LossBreakdown:
        """
        Objective for one batch with targets ``y`` (B×N×H).

        The task term scores the consensus forecast against the head variances;
        the phase term combines the simplex penalty with β·JS.
        """
        output = self(x, context, generator)
        return objective(output, y, self.cfg, meta)


def objective(
    output: ModelOutput, y: torch.Tensor, cfg: RunConfig, meta: Union[torch.Tensor, float] = 0.0
) -> LossBreakdown:
    bundle = output.bundle
    task = task_loss(output.prediction, output.forecast.sigma2, y, cfg.eta, cfg.nll)
    phase = phase_loss(output.alpha, bundle.v_diff, bundle.v_sync, bundle.v_spec, cfg.beta)
    return total_loss(
        task,
        phase,
        meta,
        cfg.lambda1,
        cfg.lambda2,
        js=js_divergence(bundle.v_diff, bundle.v_sync, bundle.v_spec).detach(),
        simplex=simplex_penalty(output.alpha).detach(),
    )


def build_model(cfg: RunConfig, seed: Optional[int] = None) -> MCPSTModel:
    """Construct and deterministically initialise a model."""
    model = MCPSTModel(cfg)
    initialize_parameters(model, XorShiftRNG(cfg.resolved_seed() if seed is None else seed))
    logger.debug(f"Built model with {sum(p.numel() for p in model.parameters())} parameters")
    return model


def physics_summary(model: MCPSTModel, context: Optional[GraphContext] = None) -> dict:
    """Learned physical scalars (κ, C, γ_global, α_mem, β_c) and the spectral gap."""
    summary = {
        "kappa": model.diff.kappa,
        "capacity": model.diff.capacity,
        "gamma_global": model.sync.gamma_global,
        "alpha_mem": float(model.enc.alpha_mem.detach()),
        "beta_c": float(model.beta_c.detach()),
    }
    if context is not None:
        summary["spectral_gap"] = float(context.gap)
    return summary


@dataclass
class WindowForecasts:
    """Forecasts stacked over a run of windows, in normalized units."""

    starts: np.ndarray
    y_hat: np.ndarray
    sigma2: np.ndarray
    y: np.ndarray
    alpha: np.ndarray


@torch.no_grad()
def forecast_windows(model: MCPSTModel, windows: Sequence[WindowSample], context: GraphContext,
                     batch_size: int = 32) -> WindowForecasts:
    """Evaluation-mode forward over ``windows`` in chronological batches."""
    if not windows:
        raise InsufficientDataError("no windows to forecast")
    was_training = model.training
    model.eval()
    y_hat, sigma2, targets, alpha = [], [], [], []
    for start in range(0, len(windows), batch_size):
        x, y = stack_windows(windows[start:start + batch_size])
        output = model(x, context)
        y_hat.append(output.prediction.numpy())
        sigma2.append(output.forecast.sigma2.numpy())
        targets.append(y.numpy())
        alpha.append(output.alpha.numpy())
    model.train(was_training)
    return WindowForecasts(
        starts=np.array([w.start_index for w in windows]),
        y_hat=np.concatenate(y_hat),
        sigma2=np.concatenate(sigma2),
        y=np.concatenate(targets),
        alpha=np.concatenate(alpha),
    )


def save_model(
    model: MCPSTModel,
    path: Union[str, Path],
    optimizer: Optional[OptimizerState] = None,
    data_stats: Optional[Tuple[float, float]] = None,
) -> None:
    """Write the model file: config block, parameters, optimizer moments, normalization stats."""
    extras = {}
    if data_stats is not None:
        extras = {"data.mean": np.array([data_stats[0]]), "data.std": np.array([data_stats[1]])}
    save_state(capture_state(model, dump_run_config(model.cfg), optimizer, extras), path)


def load_model(path: Union[str, Path]) -> Tuple[MCPSTModel, ModelState]:
    """Rebuild a model from its file.

    The returned state carries optimizer moments and data stats.
    """
    state = load_state(path)
    cfg = build_run_config(parse_key_values(state.config_text, str(path)))
    model = MCPSTModel(cfg)
    restore_parameters(model, state.tensors)
    logger.info(f"Loaded model from {path}")
    return model, state


def data_stats(state: ModelState) -> Tuple[float, float]:
    """Normalization (mean, std) stored alongside the parameters."""
    try:
        return float(state.tensors["data.mean"][0]), float(state.tensors["data.std"][0])
    except KeyError as exc:
        raise CheckpointError("model file carries no normalization statistics") from exc
