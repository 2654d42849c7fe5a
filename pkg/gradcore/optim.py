"""
AdamW with decoupled weight decay, and global gradient-norm clipping.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import torch

from utils.logger import get_logger

logger = get_logger(__name__)

NamedParameters = Iterable[Tuple[str, torch.Tensor]]


@dataclass
class OptimizerState:
    """Per-parameter Adam moments plus the step counter and hyperparameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: Dict[str, torch.Tensor] = field(default_factory=dict)
    second_moment: Dict[str, torch.Tensor] = field(default_factory=dict)

    def clone(self) -> "OptimizerState":
        return OptimizerState(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
            step_count=self.step_count,
            first_moment={k: v.clone() for k, v in self.first_moment.items()},
            second_moment={k: v.clone() for k, v in self.second_moment.items()},
        )


def create_optimizer(params: NamedParameters, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                     eps: float = 1e-8, weight_decay: float = 0.0) -> OptimizerState:
    """Zero moments for every trainable parameter."""
    state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
    for name, param in params:
        if param.requires_grad:
            state.first_moment[name] = torch.zeros_like(param.detach())
            state.second_moment[name] = torch.zeros_like(param.detach())
    return state


@torch.no_grad()
def adamw_step(params: NamedParameters, opt: OptimizerState) -> None:
    """
    One AdamW update, in place.

    θ ← θ − lr·wd·θ first, then the bias-corrected Adam step
    θ ← θ − lr·m̂ / (√v̂ + eps).
    """
    opt.step_count += 1
    bias1 = 1.0 - opt.beta1 ** opt.step_count
    bias2 = 1.0 - opt.beta2 ** opt.step_count
    for name, param in params:
        if not param.requires_grad:
            continue
        grad = param.grad if param.grad is not None else torch.zeros_like(param)
        if name not in opt.first_moment:
            opt.first_moment[name] = torch.zeros_like(param)
            opt.second_moment[name] = torch.zeros_like(param)
        m = opt.first_moment[name]
        v = opt.second_moment[name]

        if opt.weight_decay:
            param.mul_(1.0 - opt.lr * opt.weight_decay)

        m.mul_(opt.beta1).add_(grad, alpha=1.0 - opt.beta1)
        v.mul_(opt.beta2).addcmul_(grad, grad, value=1.0 - opt.beta2)

        denom = (v / bias2).sqrt_().add_(opt.eps)
        param.addcdiv_(m, denom, value=-opt.lr / bias1)


@torch.no_grad()
def sgd_step(params: NamedParameters, lr: float) -> None:
    """Plain gradient descent, used by the meta-learning inner loop."""
    for _, param in params:
        if param.requires_grad and param.grad is not None:
            param.add_(param.grad, alpha=-lr)


@torch.no_grad()
def global_grad_norm(params: NamedParameters) -> float:
    total = torch.zeros((), dtype=torch.float64)
    for _, param in params:
        if param.grad is not None:
            total += (param.grad.to(torch.float64) ** 2).sum()
    return float(total.sqrt())


@torch.no_grad()
def clip_global_norm(params: NamedParameters, tau: float) -> float:
    """
    Scale all grads by tau/‖g‖ when the global L2 norm exceeds tau.

    Returns:
        The scale applied (1.0 when untouched)
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    named = list(params)
    norm = global_grad_norm(named)
    if norm <= tau:
        return 1.0
    scale = tau / norm
    for _, param in named:
        if param.grad is not None:
            param.grad.mul_(scale)
    logger.debug(f"Clipped gradient norm {norm:.4f} -> {tau}")
    return scale
