"""
Seasonal and trend branches on the raw input, and the residual graph
convolution that stabilizes the transformer output across neighbouring nodes.
"""

from typing import Optional

import torch
from torch import nn

from gradcore.autodiff import DTYPE

KEEP_PROB = 0.9
TREND_KERNELS = (7, 5, 3)


class SeasonalComponent(nn.Module):
    """LN(W₂ ReLU(W₁ x + b₁) + b₂)."""

    def __init__(self, in_channels: int, width: int):
        super().__init__()
        self.dense_in = nn.Linear(in_channels, width, dtype=DTYPE)
        self.dense_out = nn.Linear(width, width, dtype=DTYPE)
        self.norm = nn.LayerNorm(width, eps=1e-5, dtype=DTYPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.norm(self.dense_out(torch.relu(self.dense_in(x))))


def seasonal_component(x: torch.Tensor, params: SeasonalComponent) -> torch.Tensor:
    """B×T×N×C → B×T×N×w."""
    return params(x)


class TrendComponent(nn.Module):
    """Temporal convolutions with kernels 7 → 5 → 3, zero padding, ReLU between."""

    def __init__(self, in_channels: int, width: int):
        super().__init__()
        channels = (in_channels,) + (width,) * len(TREND_KERNELS)
        self.convs = nn.ModuleList(
            nn.Conv1d(channels[i], channels[i + 1], kernel, padding=kernel // 2, dtype=DTYPE)
            for i, kernel in enumerate(TREND_KERNELS)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, steps, nodes, channels = x.shape
        out = x.permute(0, 2, 3, 1).reshape(batch * nodes, channels, steps)
        for index, conv in enumerate(self.convs):
            out = conv(out)
            if index < len(self.convs) - 1:
                out = torch.relu(out)
        return out.reshape(batch, nodes, -1, steps).permute(0, 2, 3, 1)


def trend_component(x: torch.Tensor, params: TrendComponent) -> torch.Tensor:
    """B×T×N×C → B×w×T×N (channel-first, as the convolutions see it)."""
    return params(x)


class SpatialStabilizer(nn.Module):
    """F + W₂ · dropout(ReLU(Â · W₁ F)) over the node axis."""

    def __init__(self, width: int, keep_prob: float = KEEP_PROB):
        super().__init__()
        self.keep_prob = keep_prob
        self.conv_in = nn.Linear(width, width, dtype=DTYPE)
        self.conv_out = nn.Linear(width, width, dtype=DTYPE)
        self.fallback_draws = 0

    def fallback_generator(self) -> torch.Generator:
        """Mask stream for calls without a generator; advances on every draw."""
        generator = torch.Generator().manual_seed(self.fallback_draws)
        self.fallback_draws += 1
        return generator

    def forward(self, f: torch.Tensor, propagation: torch.Tensor,
                generator: Optional[torch.Generator] = None) -> torch.Tensor:
        return spatial_stabilize(f, propagation, self, generator)


def spatial_stabilize(
    f: torch.Tensor,
    propagation: torch.Tensor,
    params: SpatialStabilizer,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    Residual graph convolution on a B×T×N×w block.

    Dropout (inverted, keep probability ``params.keep_prob``) is applied only
    in training mode, with masks drawn from ``generator``.
    """
    hidden = torch.relu(torch.einsum("nm,btmw->btnw", propagation, params.conv_in(f)))
    if params.training and params.keep_prob < 1.0:
        if generator is None:
            generator = params.fallback_generator()
        keep = torch.full(hidden.shape, params.keep_prob, dtype=hidden.dtype)
        mask = torch.bernoulli(keep, generator=generator)
        hidden = hidden * mask / params.keep_prob
    return f + params.conv_out(hidden)
