"""
Diffusion phase.

Congestion is modelled as heat on the road graph: a learned source map gates
the node features into an initial state, explicit Euler steps with learnable
diffusivity κ and capacity C spread it, and a small MLP reads the final state
out into a per-node horizon forecast.
"""

from dataclasses import dataclass
from typing import Tuple

import torch
from torch import nn

from gradcore.autodiff import DTYPE, clip
from utils.errors import ShapeError, StabilityError
from utils.logger import get_logger

logger = get_logger(__name__)

KAPPA_INIT = 0.1
CAPACITY_INIT = 1.0


@dataclass(frozen=True)
class DiffusionConfig:
    """Step count, integration span and the clip ranges of κ and C."""

    k_steps: int = 6
    total_time: float = 0.1
    kappa_bounds: Tuple[float, float] = (0.01, 0.3)
    capacity_bounds: Tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        if self.k_steps < 1:
            raise ValueError(f"k_steps must be >= 1, got {self.k_steps}")

    @property
    def dt(self) -> float:
        return self.total_time / self.k_steps

    def check_stability(self, max_degree: float) -> None:
        """
        Raise unless dt·κ_max·λ_max/C_min < 2, with λ_max ≤ 2·max_degree.

        Raises:
            StabilityError: reporting the largest admissible Δt
        """
        lambda_bound = 2.0 * max_degree
        kappa_max = self.kappa_bounds[1]
        capacity_min = self.capacity_bounds[0]
        if self.dt * kappa_max * lambda_bound / capacity_min >= 2.0:
            dt_bound = 2.0 * capacity_min / (kappa_max * lambda_bound)
            raise StabilityError(
                f"explicit diffusion unstable: dt = {self.dt:.6g} "
                f"but this graph requires dt < {dt_bound:.6g} "
                f"(max degree {max_degree:.4g})"
            )


@dataclass
class DiffusionState:
    """Diffusion state T⁽ᵗ⁾ of shape B×N×D after ``step_index`` Euler steps."""

    t_state: torch.Tensor
    step_index: int = 0


def init_state(features: torch.Tensor, sources: torch.Tensor) -> DiffusionState:
    """T⁽⁰⁾ = F ⊙ Q(F)·1ᵀ."""
    aligned = sources.dim() == features.dim() and sources.shape[:-1] == features.shape[:-1]
    if not aligned or sources.shape[-1] != 1:
        raise ShapeError(
            f"sources {tuple(sources.shape)} do not align with features {tuple(features.shape)}"
        )
    return DiffusionState(t_state=features * sources, step_index=0)


def run_diffusion(
    state: DiffusionState,
    lap_comb: torch.Tensor,
    kappa_raw: torch.Tensor,
    capacity_raw: torch.Tensor,
    cfg: DiffusionConfig,
) -> DiffusionState:
    """
    Apply T ← T − (Δt·κ/C)·L·T ``cfg.k_steps`` times.

    Args:
        state: Initial state, B×N×D
        lap_comb: Combinatorial Laplacian, N×N
        kappa_raw: Unclipped diffusivity
        capacity_raw: Unclipped capacity
        cfg: Step count and bounds

    Returns:
        State after k_steps; differentiable in κ, C and the initial state
    """
    cfg.check_stability(float(lap_comb.diagonal().max()))
    kappa = clip(kappa_raw, *cfg.kappa_bounds)
    capacity = clip(capacity_raw, *cfg.capacity_bounds)
    rate = cfg.dt * kappa / capacity

    t_state = state.t_state
    for _ in range(cfg.k_steps):
        t_state = t_state - rate * (lap_comb @ t_state)
    return DiffusionState(t_state=t_state, step_index=state.step_index + cfg.k_steps)


def estimate_sources(features: torch.Tensor, params: "DiffusionPhase") -> torch.Tensor:
    """Q(F) = sigmoid(W_q2 ReLU(W_q1 F + b_q1) + b_q2), B×N×1 in (0, 1)."""
    return torch.sigmoid(params.source_out(torch.relu(params.source_hidden(features))))


def diffusion_predict(state: DiffusionState, params: "DiffusionPhase") -> torch.Tensor:
    """Ṽ_diff = W_flow ReLU(W_f T⁽ᴷ⁾ + b_f), B×N×H."""
    return params.flow(torch.relu(params.readout_hidden(state.t_state)))


class DiffusionPhase(nn.Module):
    """Learnable pieces of the diffusion phase (parameter namespace ``diff.*``)."""

    def __init__(self, width: int, horizon: int, cfg: DiffusionConfig):
        super().__init__()
        self.cfg = cfg
        self.source_hidden = nn.Linear(width, width, dtype=DTYPE)
        self.source_out = nn.Linear(width, 1, dtype=DTYPE)
        self.kappa_raw = nn.Parameter(torch.tensor(KAPPA_INIT, dtype=DTYPE))
        self.capacity_raw = nn.Parameter(torch.tensor(CAPACITY_INIT, dtype=DTYPE))
        self.readout_hidden = nn.Linear(width, width, dtype=DTYPE)
        self.flow = nn.Linear(width, horizon, dtype=DTYPE)

    @property
    def kappa(self) -> float:
        return float(clip(self.kappa_raw.detach(), *self.cfg.kappa_bounds))

    @property
    def capacity(self) -> float:
        return float(clip(self.capacity_raw.detach(), *self.cfg.capacity_bounds))

    def forward(
        self, features: torch.Tensor, lap_comb: torch.Tensor
    ) -> Tuple[DiffusionState, torch.Tensor]:
        state = init_state(features, estimate_sources(features, self))
        final = run_diffusion(state, lap_comb, self.kappa_raw, self.capacity_raw, self.cfg)
        return final, diffusion_predict(final, self)
