"""
Differentiation helpers on top of torch autograd.

Every model tensor is float64. Besides the primitives torch already
differentiates, this module supplies the few with non-default gradient
conventions (clip, phase wrap, arctan2/norm at the origin), the
forward/backward driver that names the first non-finite operation, and the
finite-difference oracle.
"""

import hashlib
import math
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

import torch
from torch import nn

from utils.errors import NonFiniteError
from utils.logger import get_logger

logger = get_logger(__name__)

DTYPE = torch.float64
TWO_PI = 2.0 * math.pi

NamedParameters = Iterable[Tuple[str, torch.Tensor]]


def clip(x: torch.Tensor, low: float, high: float) -> torch.Tensor:
    """Clamp with gradient 1 strictly inside (low, high) and 0 on or beyond the bounds."""
    inside = (x > low) & (x < high)
    return torch.where(inside, x, x.detach().clamp(low, high))


def wrap_phase(x: torch.Tensor) -> torch.Tensor:
    """x mod 2π in [0, 2π); gradient 1 almost everywhere."""
    wrapped = torch.remainder(x, TWO_PI)
    # remainder can round up to exactly 2π for tiny negative inputs
    return torch.where(wrapped >= TWO_PI, wrapped - TWO_PI, wrapped)


def safe_norm(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Euclidean norm whose gradient at the zero vector is 0 instead of NaN."""
    squared = (x * x).sum(dim=dim)
    positive = squared > 0
    safe = torch.where(positive, squared, torch.ones_like(squared))
    return torch.where(positive, torch.sqrt(safe), torch.zeros_like(squared))


def safe_atan2(y: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """arctan2 with atan2(0, 0) = 0 and a zero gradient there."""
    origin = (y == 0) & (x == 0)
    safe_x = torch.where(origin, torch.ones_like(x), x)
    return torch.where(origin, torch.zeros_like(y), torch.atan2(y, safe_x))


def _loss_tensor(result: Any) -> torch.Tensor:
    loss = getattr(result, "total", result)
    if not isinstance(loss, torch.Tensor) or loss.numel() != 1:
        raise TypeError("graph function must return a scalar tensor or an object with .total")
    return loss.reshape(())


def _finite_hooks(model: nn.Module, first_bad: List[str]) -> List[Any]:
    handles = []

    def make_hook(name: str):
        def hook(_module, _inputs, output):
            if first_bad:
                return
            tensors = output if isinstance(output, (tuple, list)) else (output,)
            for tensor in tensors:
                if isinstance(tensor, torch.Tensor) and not torch.isfinite(tensor).all():
                    first_bad.append(name or type(_module).__name__)
                    return

        return hook

    for name, module in model.named_modules():
        handles.append(module.register_forward_hook(make_hook(name)))
    return handles


def forward_backward(
    model: nn.Module, graph_fn: Callable[..., Any], *inputs: Any
) -> Tuple[float, Any]:
    """
    Run ``graph_fn(*inputs)``, backpropagate its loss into ``model``'s parameters.

    Grads are zeroed first; frozen parameters end with zero grads.

    Returns:
        (loss value, whatever graph_fn returned)

    Raises:
        NonFiniteError: naming the first submodule that emitted NaN/Inf, or the
            first parameter whose gradient is non-finite
    """
    for param in model.parameters():
        param.grad = None
    first_bad: List[str] = []
    handles = _finite_hooks(model, first_bad)
    try:
        result = graph_fn(*inputs)
    finally:
        for handle in handles:
            handle.remove()
    loss = _loss_tensor(result)
    if not torch.isfinite(loss):
        raise NonFiniteError(first_bad[0] if first_bad else "loss", f"loss = {loss.item()}")
    loss.backward()
    for name, param in model.named_parameters():
        if param.grad is None:
            param.grad = torch.zeros_like(param)
        elif not torch.isfinite(param.grad).all():
            raise NonFiniteError(f"backward:{name}")
    return loss.item(), result


def finite_difference_check(
    graph_fn: Callable[[], Any],
    params: NamedParameters,
    epsilon: float = 1e-5,
    analytic: Optional[Dict[str, torch.Tensor]] = None,
) -> float:
    """
    Compare reverse-mode gradients with central differences.

    For every trainable scalar θ: |g_ad − g_fd| / max(1, |g_ad|, |g_fd|) with
    g_fd = (f(θ+ε) − f(θ−ε)) / (2ε).

    Args:
        graph_fn: Zero-argument callable returning the scalar loss
        params: Named parameters to check (frozen ones are skipped)
        epsilon: Perturbation in [1e-7, 1e-3]
        analytic: Gradients to test instead of autograd's own

    Returns:
        Maximum relative error
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    named = [(name, p) for name, p in params if p.requires_grad]

    if analytic is None:
        for _, p in named:
            p.grad = None
        _loss_tensor(graph_fn()).backward()
        analytic = {name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
                    for name, p in named}

    worst, worst_name = 0.0, ""
    with torch.no_grad():
        for name, p in named:
            flat = p.data.view(-1)
            grad = analytic[name].reshape(-1)
            for index in range(flat.numel()):
                original = flat[index].item()
                flat[index] = original + epsilon
                upper = _loss_tensor(graph_fn()).item()
                flat[index] = original - epsilon
                lower = _loss_tensor(graph_fn()).item()
                flat[index] = original
                g_fd = (upper - lower) / (2.0 * epsilon)
                g_ad = grad[index].item()
                error = abs(g_ad - g_fd) / max(1.0, abs(g_ad), abs(g_fd))
                if error > worst:
                    worst, worst_name = error, f"{name}[{index}]"
    logger.debug(f"Finite-difference check: max relative error {worst:.3e} at {worst_name or '-'}")
    return worst


def set_trainable(model: nn.Module, prefix: str, trainable: bool) -> int:
    """Toggle ``requires_grad`` on parameters whose name starts with ``prefix``."""
    count = 0
    for name, param in model.named_parameters():
        if name.startswith(prefix):
            param.requires_grad_(trainable)
            count += 1
    return count


def parameter_checksum(model: nn.Module) -> str:
    """Hex digest of every parameter's bytes, in registration order."""
    digest = hashlib.sha256()
    for name, param in model.named_parameters():
        digest.update(name.encode("utf-8"))
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def as_tensor(values: Union[torch.Tensor, Any]) -> torch.Tensor:
    """Float64 tensor view of arrays/lists/scalars."""
    if isinstance(values, torch.Tensor):
        return values.to(DTYPE)
    return torch.as_tensor(values, dtype=DTYPE)
