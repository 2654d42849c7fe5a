"""
Phase-conditioned multi-head attention over time and the transformer layer
built on it.

Attention runs per node along the T axis. The phase features of each node
shift Q, K and V additively and produce a per-query gate and bias that
modulate the score rows.
"""

import math
from typing import Tuple, Union

import torch
from torch import nn

from gradcore.autodiff import DTYPE


def positional_encoding(steps: int, width: int) -> torch.Tensor:
    """P(t, 2i) = sin(t / 10000^(2i/width)), P(t, 2i+1) = cos(t / 10000^(2i/width))."""
    positions = torch.arange(steps, dtype=DTYPE).unsqueeze(1)
    even = torch.arange(0, width, 2, dtype=DTYPE)
    angles = positions / torch.pow(torch.tensor(10000.0, dtype=DTYPE), even / width)
    table = torch.zeros(steps, width, dtype=DTYPE)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles[:, : width // 2])
    return table


class PhaseConditionedAttention(nn.Module):
    """Multi-head attention with phase-dependent shifts, gates and biases."""

    def __init__(self, width: int, phase_width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.d_k = math.ceil(width / heads)
        inner = heads * self.d_k
        self.query = nn.Linear(width, inner, dtype=DTYPE)
        self.key = nn.Linear(width, inner, dtype=DTYPE)
        self.value = nn.Linear(width, inner, dtype=DTYPE)
        self.phase_query = nn.Linear(phase_width, inner, dtype=DTYPE)
        self.phase_key = nn.Linear(phase_width, inner, dtype=DTYPE)
        self.phase_value = nn.Linear(phase_width, inner, dtype=DTYPE)
        self.gate = nn.Linear(width + phase_width, heads, dtype=DTYPE)
        self.bias = nn.Linear(width + phase_width, heads, dtype=DTYPE)
        self.output = nn.Linear(inner, width, dtype=DTYPE)

    def _split(self, tensor: torch.Tensor) -> torch.Tensor:
        # B×N×T×(heads·d_k) -> B×N×heads×T×d_k
        batch, nodes, steps, _ = tensor.shape
        return tensor.reshape(batch, nodes, steps, self.heads, self.d_k).transpose(2, 3)

    def forward(self, h_seq: torch.Tensor, f_phase: torch.Tensor):
        return phase_attention(h_seq, f_phase, self)


def phase_attention(
    h_seq: torch.Tensor,
    f_phase: torch.Tensor,
    params: PhaseConditionedAttention,
    return_weights: bool = False,
) -> Union[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    """
    Args:
        h_seq: B×T×N×w sequence
        f_phase: B×N×p phase features, broadcast over time
        params: Attention parameters
        return_weights: Also return the B×N×heads×T×T softmax weights

    Returns:
        B×T×N×w attended sequence
    """
    seq = h_seq.permute(0, 2, 1, 3)
    steps = seq.shape[2]
    phase = f_phase.unsqueeze(2)

    q = params._split(params.query(seq) + params.phase_query(phase))
    k = params._split(params.key(seq) + params.phase_key(phase))
    v = params._split(params.value(seq) + params.phase_value(phase))

    conditioned = torch.cat([seq, phase.expand(-1, -1, steps, -1)], dim=-1)
    gate = torch.sigmoid(params.gate(conditioned)).permute(0, 1, 3, 2).unsqueeze(-1)
    bias = params.bias(conditioned).permute(0, 1, 3, 2).unsqueeze(-1)

    scores = (q @ k.transpose(-1, -2)) / math.sqrt(params.d_k) * gate + bias
    weights = torch.softmax(scores, dim=-1)
    attended = (weights @ v).transpose(2, 3)
    batch, nodes = attended.shape[:2]
    merged = attended.reshape(batch, nodes, steps, params.heads * params.d_k)
    out = params.output(merged).permute(0, 2, 1, 3)
    return (out, weights) if return_weights else out


class TransformerLayer(nn.Module):
    """Z = LN(H + A(H; F)); H' = LN(Z + W₂ GELU(W₁ Z + b₁) + b₂)."""

    def __init__(self, width: int, phase_width: int, heads: int, ffn_mult: int = 2):
        super().__init__()
        self.attention = PhaseConditionedAttention(width, phase_width, heads)
        self.norm_attn = nn.LayerNorm(width, eps=1e-5, dtype=DTYPE)
        self.ffn_in = nn.Linear(width, ffn_mult * width, dtype=DTYPE)
        self.ffn_out = nn.Linear(ffn_mult * width, width, dtype=DTYPE)
        self.norm_ffn = nn.LayerNorm(width, eps=1e-5, dtype=DTYPE)

    def forward(self, h_seq: torch.Tensor, f_phase: torch.Tensor) -> torch.Tensor:
        z = self.norm_attn(h_seq + self.attention(h_seq, f_phase))
        return self.norm_ffn(z + self.ffn_out(nn.functional.gelu(self.ffn_in(z))))


def transformer_layer(
    h_seq: torch.Tensor, f_phase: torch.Tensor, params: TransformerLayer
) -> torch.Tensor:
    return params(h_seq, f_phase)
