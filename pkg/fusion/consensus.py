"""
Adaptive consensus fusion.

The three phase blocks (diffusion, synchronization, spectral, in that order)
are scored by a small attention MLP, projected to a common width, mixed with
the simplex weights α, and fused back onto the diffusion state through a
residual branch.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import nn

from gradcore.autodiff import DTYPE
from utils.errors import ShapeError

PHASE_NAMES = ("diffusion", "sync", "spectral")


@dataclass
class PhaseBundle:
    """Phase feature blocks and per-phase horizon predictions."""

    f_diff: torch.Tensor
    f_sync: torch.Tensor
    f_spec: torch.Tensor
    v_diff: torch.Tensor
    v_sync: torch.Tensor
    v_spec: torch.Tensor

    def __post_init__(self):
        lead = self.f_diff.shape[:2]
        for name in ("f_sync", "f_spec", "v_diff", "v_sync", "v_spec"):
            if getattr(self, name).shape[:2] != lead:
                shape = tuple(getattr(self, name).shape[:2])
                raise ShapeError(f"{name} has leading shape {shape}, expected {tuple(lead)}")
        if not self.v_diff.shape == self.v_sync.shape == self.v_spec.shape:
            raise ShapeError("phase predictions disagree on the horizon")

    @property
    def concatenated(self) -> torch.Tensor:
        """F_cat = [T⁽ᴷ⁾ ⊕ Z_sync ⊕ F_spec]."""
        return torch.cat([self.f_diff, self.f_sync, self.f_spec], dim=-1)

    @property
    def predictions(self) -> torch.Tensor:
        """Ṽ stacked along a trailing phase axis, B×N×H×3."""
        return torch.stack([self.v_diff, self.v_sync, self.v_spec], dim=-1)


@dataclass
class AttentionWeights:
    """α rows on the probability simplex, B×N×3."""

    alpha: torch.Tensor

    def simplex_deviation(self) -> float:
        return float((self.alpha.sum(dim=-1) - 1.0).abs().max())


def attention_weights(
    bundle: PhaseBundle,
    params: "ConsensusFusion",
    enabled: Optional[Sequence[bool]] = None,
    adaptive: bool = True,
) -> AttentionWeights:
    """
    α = softmax(W_α2 ReLU(W_α1 F_cat + b_α1) + b_α2).

    Args:
        bundle: Phase blocks
        params: Fusion parameters
        enabled: Per-phase mask; disabled phases get α = 0
        adaptive: When false, α is uniform over the enabled phases
    """
    logits = params.attn_out(torch.relu(params.attn_hidden(bundle.concatenated)))
    if not adaptive:
        logits = torch.zeros_like(logits)
    if enabled is not None and not all(enabled):
        if not any(enabled):
            raise ValueError("at least one phase must stay enabled")
        mask = torch.tensor(list(enabled), dtype=torch.bool)
        logits = logits.masked_fill(~mask, float("-inf"))
    return AttentionWeights(alpha=torch.softmax(logits, dim=-1))


def weighted_combine(
    bundle: PhaseBundle, alpha: torch.Tensor, params: "ConsensusFusion"
) -> torch.Tensor:
    """F_weighted = Σ_i α_i P_i(F⁽ⁱ⁾), each block first projected to D_total."""
    blocks = (
        params.proj_diff(bundle.f_diff),
        params.proj_sync(bundle.f_sync),
        params.proj_spec(bundle.f_spec),
    )
    return sum(alpha[..., i:i + 1] * block for i, block in enumerate(blocks))


def residual_fuse(
    weighted: torch.Tensor, t_final: torch.Tensor, params: "ConsensusFusion"
) -> torch.Tensor:
    """F_fused = W_fuse2 ReLU(W_fuse1 F_weighted + b) + b + ℛ(T⁽ᴷ⁾)."""
    return params.fuse_out(torch.relu(params.fuse_hidden(weighted))) + params.residual(t_final)


class ConsensusFusion(nn.Module):
    """Learnable pieces of the fusion stage (parameter namespace ``fusion.*``)."""

    def __init__(self, width: int, residual_width: Optional[int] = None):
        super().__init__()
        residual_width = width if residual_width is None else residual_width
        self.total_width = width + (width + 2) + width // 4
        self.attn_hidden = nn.Linear(self.total_width, width, dtype=DTYPE)
        self.attn_out = nn.Linear(width, len(PHASE_NAMES), dtype=DTYPE)
        self.proj_diff = nn.Linear(width, self.total_width, dtype=DTYPE)
        self.proj_sync = nn.Linear(width + 2, self.total_width, dtype=DTYPE)
        self.proj_spec = nn.Linear(width // 4, self.total_width, dtype=DTYPE)
        self.fuse_hidden = nn.Linear(self.total_width, width, dtype=DTYPE)
        self.fuse_out = nn.Linear(width, width, dtype=DTYPE)
        if residual_width == width:
            self.residual: nn.Module = nn.Identity()
        else:
            self.residual = nn.Linear(residual_width, width, dtype=DTYPE)

    def forward(
        self,
        bundle: PhaseBundle,
        enabled: Optional[Sequence[bool]] = None,
        adaptive: bool = True,
    ):
        weights = attention_weights(bundle, self, enabled=enabled, adaptive=adaptive)
        fused = residual_fuse(weighted_combine(bundle, weights.alpha, self), bundle.f_diff, self)
        return weights, fused
