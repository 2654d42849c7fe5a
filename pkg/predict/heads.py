"""
Horizon-specific prediction heads with softplus variance, and the neural
consensus that blends the encoder forecast with the phase forecasts.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch
from torch import nn

from gradcore.autodiff import DTYPE

BETA_INIT = -2.0
HEAD_DEPTHS = (2, 3, 3)


def horizon_split(horizon: int) -> Tuple[int, int, int]:
    """(short, medium, long) step counts: short = medium = max(1, H // 4), long takes the rest."""
    if horizon < 3:
        raise ValueError(f"horizon must be >= 3 to split into three heads, got {horizon}")
    short = max(1, horizon // 4)
    return short, short, horizon - 2 * short


@dataclass
class ForecastOutput:
    """Head forecasts and variances (B×N×H); ``consensus`` is the final blended forecast."""

    y_hat: torch.Tensor
    sigma2: torch.Tensor
    split: Tuple[int, int, int]
    consensus: Optional[torch.Tensor] = None

    def _slice(self, tensor: torch.Tensor, index: int) -> torch.Tensor:
        start = sum(self.split[:index])
        return tensor[..., start:start + self.split[index]]

    @property
    def short(self) -> torch.Tensor:
        return self._slice(self.y_hat, 0)

    @property
    def medium(self) -> torch.Tensor:
        return self._slice(self.y_hat, 1)

    @property
    def long(self) -> torch.Tensor:
        return self._slice(self.y_hat, 2)


class HorizonHead(nn.Module):
    """
    GELU stack with layer norm between layers, linear forecast and softplus variance.

    depth 2: F_h = GELU(W₂ LN(GELU(W₁ F + b₁)) + b₂)
    depth 3: F_h = GELU(W₃ LN(GELU(W₂ LN(GELU(W₁ F + b₁)) + b₂)) + b₃)
    """

    def __init__(self, width: int, steps: int, depth: int):
        super().__init__()
        self.layers = nn.ModuleList(nn.Linear(width, width, dtype=DTYPE) for _ in range(depth))
        self.norms = nn.ModuleList(
            nn.LayerNorm(width, eps=1e-5, dtype=DTYPE) for _ in range(depth - 1)
        )
        self.final = nn.Linear(width, steps, dtype=DTYPE)
        self.var_hidden = nn.Linear(width, width, dtype=DTYPE)
        self.var_out = nn.Linear(width, steps, bias=False, dtype=DTYPE)

    def forward(self, fused: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        hidden = nn.functional.gelu(self.layers[0](fused))
        for norm, layer in zip(self.norms, self.layers[1:]):
            hidden = nn.functional.gelu(layer(norm(hidden)))
        y_hat = self.final(hidden)
        sigma2 = nn.functional.softplus(self.var_out(nn.functional.gelu(self.var_hidden(hidden))))
        return y_hat, sigma2


class HorizonHeads(nn.Module):
    """Short, medium and long heads (parameter namespace ``heads.*``)."""

    def __init__(self, width: int, horizon: int):
        super().__init__()
        self.split = horizon_split(horizon)
        self.short = HorizonHead(width, self.split[0], HEAD_DEPTHS[0])
        self.medium = HorizonHead(width, self.split[1], HEAD_DEPTHS[1])
        self.long = HorizonHead(width, self.split[2], HEAD_DEPTHS[2])

    def forward(self, fused: torch.Tensor) -> ForecastOutput:
        return horizon_heads(fused, self)


def horizon_heads(fused: torch.Tensor, params: HorizonHeads) -> ForecastOutput:
    """Run the three heads on F_fused (B×N×D) and concatenate along the horizon."""
    forecasts: List[torch.Tensor] = []
    variances: List[torch.Tensor] = []
    for head in (params.short, params.medium, params.long):
        y_hat, sigma2 = head(fused)
        forecasts.append(y_hat)
        variances.append(sigma2)
    return ForecastOutput(y_hat=torch.cat(forecasts, dim=-1), sigma2=torch.cat(variances, dim=-1),
                          split=params.split)


def neural_consensus(
    y_model: torch.Tensor,
    v_diff: torch.Tensor,
    v_sync: torch.Tensor,
    v_spec: torch.Tensor,
    alpha: torch.Tensor,
    beta_c: torch.Tensor,
) -> torch.Tensor:
    """ŷ = (1 − β_c)·y_model + β_c·Σ_i α_i Ṽ_i."""
    blend = alpha[..., 0:1] * v_diff + alpha[..., 1:2] * v_sync + alpha[..., 2:3] * v_spec
    return (1.0 - beta_c) * y_model + beta_c * blend
