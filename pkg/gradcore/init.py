"""
Deterministic parameter initialisation from the xorshift stream.

Weights: uniform(±√(6/(fan_in + fan_out))). Biases: 0. Layer-norm: γ = 1,
β = 0. Scalar physics parameters keep the values their modules assign.
"""

import math

import torch
from torch import nn

from utils.rng import XorShiftRNG


def _fans(weight: torch.Tensor):
    if weight.dim() == 2:
        return weight.shape[1], weight.shape[0]
    receptive = math.prod(weight.shape[2:])
    return weight.shape[1] * receptive, weight.shape[0] * receptive


@torch.no_grad()
def xavier_uniform(weight: torch.Tensor, rng: XorShiftRNG) -> None:
    fan_in, fan_out = _fans(weight)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    values = rng.uniform(-bound, bound, tuple(weight.shape))
    weight.copy_(torch.as_tensor(values, dtype=weight.dtype))


@torch.no_grad()
def initialize_parameters(model: nn.Module, rng: XorShiftRNG) -> None:
    """Re-initialise every Linear/Conv1d/LSTMCell/LayerNorm in module order."""
    for module in model.modules():
        if isinstance(module, (nn.Linear, nn.Conv1d)):
            xavier_uniform(module.weight, rng)
            if module.bias is not None:
                module.bias.zero_()
        elif isinstance(module, nn.LSTMCell):
            xavier_uniform(module.weight_ih, rng)
            xavier_uniform(module.weight_hh, rng)
            module.bias_ih.zero_()
            module.bias_hh.zero_()
        elif isinstance(module, nn.LayerNorm):
            if module.weight is not None:
                module.weight.fill_(1.0)
                module.bias.zero_()


@torch.no_grad()
def zero_parameters(model: nn.Module) -> None:
    """Set every parameter to zero (layer-norm γ included)."""
    for param in model.parameters():
        param.zero_()
