"""
Multi-scale spatio-temporal encoder.

Pipeline for a B×T×N×C input with phase features F (B×N×p):

1. one LSTM per dyadic scale on the downsampled input, spline-upsampled back
   to T and concatenated (4h channels)
2. seasonal and trend branches on the raw input
3. projection of [scales ⊕ seasonal ⊕ trend] to h_total, plus positions
4. phase-conditioned transformer layers
5. residual graph convolution across nodes
6. memory attention with a learned phase residual
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import torch
from torch import nn

from encoder.attention import PhaseConditionedAttention, TransformerLayer, positional_encoding
from encoder.decomposition import SeasonalComponent, SpatialStabilizer, TrendComponent
from encoder.lstm import make_cell, run_lstm
from encoder.resample import downsample, upsample_spline
from gradcore.autodiff import DTYPE

ALPHA_MEM_INIT = 0.1


@dataclass(frozen=True)
class EncoderConfig:
    hidden: int = 16
    scales: Tuple[int, ...] = (1, 2, 4, 8)
    heads: int = 8
    layers: int = 2
    ffn_mult: int = 2
    keep_prob: float = 0.9
    multiscale: bool = True

    @property
    def total_width(self) -> int:
        return len(self.scales) * self.hidden

    @property
    def component_width(self) -> int:
        return max(1, self.total_width // 8)

    @property
    def active_scales(self) -> Tuple[int, ...]:
        return self.scales if self.multiscale else self.scales[:1]


def multiscale_encode(
    x: torch.Tensor, cells: Sequence[nn.LSTMCell], scales: Sequence[int]
) -> torch.Tensor:
    """Concatenate per-scale LSTM outputs restored to the input length, B×T×N×(len(scales)·h)."""
    steps = x.shape[1]
    branches = []
    for cell, scale in zip(cells, scales):
        encoded = run_lstm(downsample(x, scale), cell)
        if scale > 1:
            encoded = upsample_spline(encoded, steps, scale)
        branches.append(encoded)
    return torch.cat(branches, dim=-1)


def memory_augment(h_last: torch.Tensor, f_phase: torch.Tensor, alpha_mem: torch.Tensor,
                   attention: PhaseConditionedAttention, phase_proj: nn.Linear) -> torch.Tensor:
    """H_mem = A_mem(H⁽ᴸ⁾; F) + H⁽ᴸ⁾ + α_mem·P(F), with P(F) broadcast over time."""
    return attention(h_last, f_phase) + h_last + alpha_mem * phase_proj(f_phase).unsqueeze(1)


class MultiScaleEncoder(nn.Module):
    """Parameter namespace ``enc.*``."""

    def __init__(self, in_channels: int, phase_width: int, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        width = cfg.total_width
        self.cells = nn.ModuleList(make_cell(in_channels, cfg.hidden) for _ in cfg.active_scales)
        self.seasonal = SeasonalComponent(in_channels, cfg.component_width)
        self.trend = TrendComponent(in_channels, cfg.component_width)
        projected = len(cfg.active_scales) * cfg.hidden + 2 * cfg.component_width
        self.input_proj = nn.Linear(projected, width, dtype=DTYPE)
        self.layers = nn.ModuleList(
            TransformerLayer(width, phase_width, cfg.heads, cfg.ffn_mult) for _ in range(cfg.layers)
        )
        self.stabilizer = SpatialStabilizer(width, cfg.keep_prob)
        self.memory = PhaseConditionedAttention(width, phase_width, cfg.heads)
        self.memory_phase = nn.Linear(phase_width, width, dtype=DTYPE)
        self.alpha_mem = nn.Parameter(torch.tensor(ALPHA_MEM_INIT, dtype=DTYPE))

    def forward(self, x: torch.Tensor, f_phase: torch.Tensor, propagation: torch.Tensor,
                generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """
        Args:
            x: B×T×N×C input block
            f_phase: B×N×p phase features
            propagation: N×N normalized adjacency D^-1/2 A D^-1/2
            generator: Dropout stream (training mode only)

        Returns:
            H_mem, B×T×N×h_total
        """
        scales = multiscale_encode(x, self.cells, self.cfg.active_scales)
        seasonal = self.seasonal(x)
        trend = self.trend(x).permute(0, 2, 3, 1)
        h = self.input_proj(torch.cat([scales, seasonal, trend], dim=-1))
        h = h + positional_encoding(x.shape[1], self.cfg.total_width).unsqueeze(0).unsqueeze(2)
        for layer in self.layers:
            h = layer(h, f_phase)
        h = self.stabilizer(h, propagation, generator)
        return memory_augment(h, f_phase, self.alpha_mem, self.memory, self.memory_phase)
