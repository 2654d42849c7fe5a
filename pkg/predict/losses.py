"""
Training objective: task loss with variance regularisation, phase
consistency (simplex penalty plus Jensen-Shannon agreement), and the
weighted total.

Every term is mean-reduced over its elements so the default weights do not
depend on batch size.
"""

import math
from dataclasses import dataclass
from typing import Dict, Union

import torch
from torch import nn

from utils.errors import ShapeError

LN3 = math.log(3.0)

Scalar = Union[torch.Tensor, float]


@dataclass
class LossBreakdown:
    """All loss terms of one evaluation; ``total`` carries the graph for backprop."""

    task: torch.Tensor
    phase: torch.Tensor
    meta: torch.Tensor
    total: torch.Tensor
    js: torch.Tensor
    simplex_penalty: torch.Tensor

    def as_floats(self) -> Dict[str, float]:
        return {
            "task": float(self.task),
            "phase": float(self.phase),
            "meta": float(self.meta),
            "total": float(self.total),
            "js": float(self.js),
            "simplex_penalty": float(self.simplex_penalty),
        }


def task_loss(
    prediction: torch.Tensor,
    sigma2: torch.Tensor,
    target: torch.Tensor,
    eta: float = 0.01,
    nll: bool = False,
) -> torch.Tensor:
    """
    mean((Ŷ − Y)²) + η·mean(σ²).

    With ``nll`` set the Gaussian negative log-likelihood replaces it.

    Raises:
        ShapeError: prediction, variance and target shapes differ
    """
    if prediction.shape != target.shape or sigma2.shape != target.shape:
        raise ShapeError(
            f"prediction {tuple(prediction.shape)}, variance {tuple(sigma2.shape)} and "
            f"target {tuple(target.shape)} must match"
        )
    if nll:
        return nn.functional.gaussian_nll_loss(prediction, target, sigma2, reduction="mean")
    return ((prediction - target) ** 2).mean() + eta * sigma2.abs().mean()


def _entropy(probs: torch.Tensor) -> torch.Tensor:
    return -torch.special.xlogy(probs, probs).sum(dim=-1)


def js_from_probabilities(
    p_diff: torch.Tensor, p_sync: torch.Tensor, p_spec: torch.Tensor
) -> torch.Tensor:
    """Three-way JS = H(mean of the three) − mean of the three entropies, per row."""
    mixture = (p_diff + p_sync + p_spec) / 3.0
    spread = _entropy(mixture) - (_entropy(p_diff) + _entropy(p_sync) + _entropy(p_spec)) / 3.0
    return spread.clamp(min=0.0)


def js_divergence(v_diff: torch.Tensor, v_sync: torch.Tensor, v_spec: torch.Tensor) -> torch.Tensor:
    """Mean over (B, N) of the JS divergence of softmax-over-horizon forecasts, in [0, ln 3]."""
    return js_from_probabilities(
        torch.softmax(v_diff, dim=-1), torch.softmax(v_sync, dim=-1), torch.softmax(v_spec, dim=-1)
    ).mean()


def simplex_penalty(alpha: torch.Tensor) -> torch.Tensor:
    """mean((Σα − 1)²); inert under softmax."""
    return ((alpha.sum(dim=-1) - 1.0) ** 2).mean()


def phase_loss(
    alpha: torch.Tensor,
    v_diff: torch.Tensor,
    v_sync: torch.Tensor,
    v_spec: torch.Tensor,
    beta: float = 0.1,
) -> torch.Tensor:
    """mean((Σα − 1)²) + β·JS."""
    return simplex_penalty(alpha) + beta * js_divergence(v_diff, v_sync, v_spec)


def _as_tensor(value: Scalar) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.tensor(float(value), dtype=torch.float64)


def total_loss(
    task: Scalar,
    phase: Scalar,
    meta: Scalar = 0.0,
    lambda1: float = 0.1,
    lambda2: float = 1.0,
    js: Scalar = 0.0,
    simplex: Scalar = 0.0,
) -> LossBreakdown:
    """ℒ_total = ℒ_task + λ₁·ℒ_phase + λ₂·ℒ_meta."""
    task, phase, meta = _as_tensor(task), _as_tensor(phase), _as_tensor(meta)
    return LossBreakdown(
        task=task,
        phase=phase,
        meta=meta,
        total=task + lambda1 * phase + lambda2 * meta,
        js=_as_tensor(js),
        simplex_penalty=_as_tensor(simplex),
    )
