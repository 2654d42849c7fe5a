"""
Synchronization phase.

Each node is an oscillator whose phase starts from its features and evolves
under discrete Kuramoto dynamics with learned intrinsic frequencies ν and a
coupling factored as γ_global·γ_local. The readout sees the features plus
cos/sin of the final phases.
"""

from dataclasses import dataclass, field
from typing import List, Tuple, Union

import torch
from torch import nn

from gradcore.autodiff import DTYPE, clip, safe_atan2, safe_norm, wrap_phase
from utils.logger import get_logger

logger = get_logger(__name__)

GAMMA_GLOBAL_INIT = 0.5


@dataclass(frozen=True)
class SyncConfig:
    k_steps: int = 10
    dt: float = 0.1
    gamma_global_bounds: Tuple[float, float] = (0.1, 1.0)

    def __post_init__(self):
        if self.k_steps < 1:
            raise ValueError(f"k_steps must be >= 1, got {self.k_steps}")


@dataclass
class PhaseState:
    """
    Oscillator phases (B×N, radians in [0, 2π)).

    ``unwrapped`` accumulates the same increments without the modulo and is
    never differentiated. ``history`` holds the wrapped phases after every
    step when recording is requested.
    """

    phases: torch.Tensor
    unwrapped: torch.Tensor
    step_index: int = 0
    history: List[torch.Tensor] = field(default_factory=list)


def estimate_frequencies(features: torch.Tensor, params: "SyncPhase") -> torch.Tensor:
    """ν(F) = W_ν2 tanh(W_ν1 F + b_ν1) + b_ν2, B×N×1."""
    return params.freq_out(torch.tanh(params.freq_hidden(features)))


def estimate_local_coupling(features: torch.Tensor, params: "SyncPhase") -> torch.Tensor:
    """γ_local(F) in (0, 1), B×N×1."""
    return torch.sigmoid(params.coupling_out(torch.relu(params.coupling_hidden(features))))


def init_phases(features: torch.Tensor) -> PhaseState:
    """φ⁽⁰⁾ = arctan2(‖f‖₂, Σ_d f_d) wrapped to [0, 2π), zero vector to 0."""
    phases = wrap_phase(safe_atan2(safe_norm(features, dim=-1), features.sum(dim=-1)))
    return PhaseState(phases=phases, unwrapped=phases.detach().clone(), step_index=0)


def kuramoto_increment(phases: torch.Tensor, adjacency: torch.Tensor, nu: torch.Tensor,
                       coupling: torch.Tensor) -> torch.Tensor:
    """dφ_k/dt = ν_k + c_k·Σ_j A_kj sin(φ_j − φ_k)."""
    differences = phases.unsqueeze(-2) - phases.unsqueeze(-1)
    return nu + coupling * (adjacency * torch.sin(differences)).sum(dim=-1)


def run_sync(
    state: PhaseState,
    adjacency: torch.Tensor,
    nu: torch.Tensor,
    gamma_local: torch.Tensor,
    gamma_global_raw: torch.Tensor,
    cfg: SyncConfig,
    record: bool = False,
) -> PhaseState:
    """
    Explicit Euler Kuramoto steps.

    Args:
        state: Initial phases
        adjacency: N×N coupling weights
        nu: Intrinsic frequencies, B×N
        gamma_local: Local coupling, B×N
        gamma_global_raw: Unclipped global coupling
        cfg: Step count, Δt and γ_global bounds
        record: Keep the phases after every step in ``history``

    Returns:
        Phases after k_steps
    """
    coupling = clip(gamma_global_raw, *cfg.gamma_global_bounds) * gamma_local
    phases, unwrapped = state.phases, state.unwrapped
    history = list(state.history)
    for _ in range(cfg.k_steps):
        increment = cfg.dt * kuramoto_increment(phases, adjacency, nu, coupling)
        phases = wrap_phase(phases + increment)
        unwrapped = unwrapped + increment.detach()
        if record:
            history.append(phases.detach().clone())
    return PhaseState(phases=phases, unwrapped=unwrapped, step_index=state.step_index + cfg.k_steps,
                      history=history)


def order_parameter(state: Union[PhaseState, torch.Tensor]) -> torch.Tensor:
    """r = |mean_k exp(iφ_k)| per batch element, from real and imaginary means."""
    phases = state.phases if isinstance(state, PhaseState) else state
    real = torch.cos(phases).mean(dim=-1)
    imag = torch.sin(phases).mean(dim=-1)
    return torch.sqrt(real * real + imag * imag)


def sync_predict(
    features: torch.Tensor, state: PhaseState, params: "SyncPhase"
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Returns:
        (v_sync B×N×H, z_sync B×N×(D+2)) with z_sync = [F; cos φ; sin φ]
    """
    phases = state.phases.unsqueeze(-1)
    z_sync = torch.cat([features, torch.cos(phases), torch.sin(phases)], dim=-1)
    v_sync = params.phase_out(torch.relu(params.readout_hidden(z_sync)))
    return v_sync, z_sync


class SyncPhase(nn.Module):
    """Learnable pieces of the synchronization phase (parameter namespace ``sync.*``)."""

    def __init__(self, width: int, horizon: int, cfg: SyncConfig):
        super().__init__()
        self.cfg = cfg
        self.freq_hidden = nn.Linear(width, width, dtype=DTYPE)
        self.freq_out = nn.Linear(width, 1, dtype=DTYPE)
        self.coupling_hidden = nn.Linear(width, width, dtype=DTYPE)
        self.coupling_out = nn.Linear(width, 1, dtype=DTYPE)
        self.gamma_global_raw = nn.Parameter(torch.tensor(GAMMA_GLOBAL_INIT, dtype=DTYPE))
        self.readout_hidden = nn.Linear(width + 2, width, dtype=DTYPE)
        self.phase_out = nn.Linear(width, horizon, dtype=DTYPE)

    @property
    def gamma_global(self) -> float:
        return float(clip(self.gamma_global_raw.detach(), *self.cfg.gamma_global_bounds))

    def forward(self, features: torch.Tensor, adjacency: torch.Tensor,
                record: bool = False) -> Tuple[PhaseState, torch.Tensor, torch.Tensor]:
        nu = estimate_frequencies(features, self).squeeze(-1)
        gamma_local = estimate_local_coupling(features, self).squeeze(-1)
        final = run_sync(init_phases(features), adjacency, nu, gamma_local, self.gamma_global_raw,
                         self.cfg, record=record)
        v_sync, z_sync = sync_predict(features, final, self)
        return final, v_sync, z_sync
