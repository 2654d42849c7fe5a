"""
Spectral phase: a learned embedding of the retained Laplacian eigenvectors
and a topology-aware readout that also sees the spectral gap.
"""

from dataclasses import dataclass

import torch
from torch import nn

from gradcore.autodiff import DTYPE


@dataclass
class SpectralFeatures:
    """F_spec (B×N×D/4) and the spectral gap g = λ₂ − λ₁."""

    f_spec: torch.Tensor
    gap: float


def spectral_features(
    eigvecs: torch.Tensor, gap: float, params: "SpectralPhase", batch: int
) -> SpectralFeatures:
    """
    F_spec = W_s2 ReLU(W_s1 Ψ_{:, :K} + b_s1) + b_s2, broadcast over the batch.

    Args:
        eigvecs: Retained eigenvectors Ψ_{:, :K}, N×K
        gap: Spectral gap
        params: Spectral phase parameters
        batch: Batch size B
    """
    embedded = params.embed_out(torch.relu(params.embed_hidden(eigvecs)))
    return SpectralFeatures(f_spec=embedded.unsqueeze(0).expand(batch, -1, -1), gap=gap)


def spectral_predict(
    eigvecs: torch.Tensor, gap: float, params: "SpectralPhase", batch: int
) -> torch.Tensor:
    """Ṽ_spec = W_spec-flow ReLU(W_in [Ψ row; g] + b), B×N×H, identical across the batch."""
    gap_column = torch.full((eigvecs.shape[0], 1), gap, dtype=eigvecs.dtype)
    hidden = torch.relu(params.flow_hidden(torch.cat([eigvecs, gap_column], dim=-1)))
    return params.spec_flow(hidden).unsqueeze(0).expand(batch, -1, -1)


class SpectralPhase(nn.Module):
    """Learnable pieces of the spectral phase (parameter namespace ``spec.*``)."""

    def __init__(self, k_spectral: int, width: int, horizon: int):
        super().__init__()
        if width % 4 != 0:
            raise ValueError(f"width must be divisible by 4, got {width}")
        self.k_spectral = k_spectral
        self.embed_hidden = nn.Linear(k_spectral, width, dtype=DTYPE)
        self.embed_out = nn.Linear(width, width // 4, dtype=DTYPE)
        self.flow_hidden = nn.Linear(k_spectral + 1, width, dtype=DTYPE)
        self.spec_flow = nn.Linear(width, horizon, dtype=DTYPE)

    def forward(self, eigvecs: torch.Tensor, gap: float, batch: int):
        if eigvecs.shape[-1] != self.k_spectral:
            raise ValueError(f"expected {self.k_spectral} eigenvectors, got {eigvecs.shape[-1]}")
        features = spectral_features(eigvecs, gap, self, batch)
        return features, spectral_predict(eigvecs, gap, self, batch)
