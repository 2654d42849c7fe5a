"""
LSTM cell and the per-node sequence loop used by every temporal scale.
"""

from typing import Tuple

import torch
from torch import nn

from gradcore.autodiff import DTYPE


def lstm_cell(x_t: torch.Tensor, h_prev: torch.Tensor, c_prev: torch.Tensor,
              cell: nn.LSTMCell) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    One LSTM step.

    f, i, o = σ(W·x + U·h + b); c̃ = tanh(W_c·x + U_c·h + b_c);
    c = f ⊙ c_prev + i ⊙ c̃; h = o ⊙ tanh(c).
    """
    return cell(x_t, (h_prev, c_prev))


def run_lstm(seq: torch.Tensor, cell: nn.LSTMCell) -> torch.Tensor:
    """Run ``cell`` along the time axis of a B×T×N×C block; returns B×T×N×h."""
    batch, steps, nodes, channels = seq.shape
    flat = seq.permute(0, 2, 1, 3).reshape(batch * nodes, steps, channels)
    h = torch.zeros(batch * nodes, cell.hidden_size, dtype=seq.dtype)
    c = torch.zeros_like(h)
    outputs = []
    for t in range(steps):
        h, c = lstm_cell(flat[:, t], h, c, cell)
        outputs.append(h)
    stacked = torch.stack(outputs, dim=1)
    return stacked.reshape(batch, nodes, steps, cell.hidden_size).permute(0, 2, 1, 3)


def make_cell(in_channels: int, hidden: int) -> nn.LSTMCell:
    return nn.LSTMCell(in_channels, hidden, dtype=DTYPE)
