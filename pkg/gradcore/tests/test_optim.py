"""
AdamW, SGD and gradient-clipping tests.
"""

import pytest
import torch
from torch import nn

from gradcore.optim import (
    adamw_step,
    clip_global_norm,
    create_optimizer,
    global_grad_norm,
    sgd_step,
)


def make_params(values, grads):
    module = nn.Module()
    module.theta = nn.Parameter(torch.tensor(values, dtype=torch.float64))
    module.theta.grad = torch.tensor(grads, dtype=torch.float64)
    return module


class TestAdamW:
    """Test suite for adamw_step."""

    @pytest.mark.smoke
    @pytest.mark.grad
    def test_first_step_magnitude(self):
        """Test first step with unit grads moves each entry by lr/(1+eps)."""
        module = make_params([1.0, -2.0, 0.5], [1.0, 1.0, 1.0])
        opt = create_optimizer(module.named_parameters(), lr=3e-4, eps=1e-8)

        adamw_step(module.named_parameters(), opt)

        expected = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64) - 3e-4 / (1.0 + 1e-8)
        assert torch.allclose(module.theta.detach(), expected, rtol=0, atol=1e-15)
        assert opt.step_count == 1

    @pytest.mark.grad
    def test_decay_only(self):
        """Test zero grads with weight decay scale θ by 1 − lr·wd."""
        module = make_params([2.0, -4.0], [0.0, 0.0])
        opt = create_optimizer(module.named_parameters(), lr=3e-4, weight_decay=1e-4)

        adamw_step(module.named_parameters(), opt)

        scale = 1.0 - 3e-4 * 1e-4
        expected = torch.tensor([2.0 * scale, -4.0 * scale], dtype=torch.float64)
        assert torch.allclose(module.theta.detach(), expected, rtol=0, atol=1e-16)
        assert torch.equal(opt.first_moment["theta"], torch.zeros(2, dtype=torch.float64))
        assert torch.equal(opt.second_moment["theta"], torch.zeros(2, dtype=torch.float64))

    @pytest.mark.grad
    def test_deterministic(self):
        """Test two identical calls from identical states give identical results."""
        first = make_params([0.1, 0.2], [0.3, -0.7])
        second = make_params([0.1, 0.2], [0.3, -0.7])
        opt_a = create_optimizer(first.named_parameters(), lr=1e-3, weight_decay=1e-4)
        opt_b = opt_a.clone()

        adamw_step(first.named_parameters(), opt_a)
        adamw_step(second.named_parameters(), opt_b)

        assert torch.equal(first.theta, second.theta)
        assert torch.equal(opt_a.second_moment["theta"], opt_b.second_moment["theta"])

    @pytest.mark.grad
    def test_frozen_parameter_untouched(self):
        """Test frozen parameters are neither decayed nor stepped."""
        module = make_params([1.0], [1.0])
        opt = create_optimizer(module.named_parameters(), lr=0.1, weight_decay=0.1)
        module.theta.requires_grad_(False)

        adamw_step(module.named_parameters(), opt)

        assert module.theta.item() == 1.0


class TestSgd:
    """Test suite for sgd_step."""

    @pytest.mark.grad
    def test_plain_descent(self):
        """Test θ ← θ − lr·g."""
        module = make_params([1.0, 1.0], [2.0, -4.0])

        sgd_step(module.named_parameters(), lr=0.25)

        assert module.theta.tolist() == [0.5, 2.0]


class TestClipGlobalNorm:
    """Test suite for clip_global_norm."""

    @pytest.mark.smoke
    @pytest.mark.grad
    def test_norm_two_scaled_by_half(self):
        """Test grads with norm 2 and tau 1 are halved."""
        module = make_params([0.0, 0.0], [1.2, 1.6])

        scale = clip_global_norm(module.named_parameters(), tau=1.0)

        assert scale == pytest.approx(0.5, abs=1e-15)
        assert global_grad_norm(module.named_parameters()) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.grad
    def test_small_norm_untouched(self):
        """Test grads with norm 0.5 are left as they are."""
        module = make_params([0.0, 0.0], [0.3, 0.4])

        scale = clip_global_norm(module.named_parameters(), tau=1.0)

        assert scale == 1.0
        assert module.theta.grad.tolist() == [0.3, 0.4]

    @pytest.mark.grad
    def test_zero_grads(self):
        """Test all-zero grads give scale 1."""
        module = make_params([1.0], [0.0])

        assert clip_global_norm(module.named_parameters(), tau=1.0) == 1.0
        assert module.theta.grad.item() == 0.0

    @pytest.mark.grad
    def test_idempotent(self):
        """Test clipping twice equals clipping once."""
        module = make_params([0.0, 0.0, 0.0], [3.0, -4.0, 12.0])
        clip_global_norm(module.named_parameters(), tau=1.0)
        once = module.theta.grad.clone()

        clip_global_norm(module.named_parameters(), tau=1.0)

        assert torch.allclose(module.theta.grad, once, rtol=1e-15, atol=0)

    @pytest.mark.grad
    def test_tau_must_be_positive(self):
        """Test non-positive tau is rejected."""
        module = make_params([0.0], [1.0])

        with pytest.raises(ValueError):
            clip_global_norm(module.named_parameters(), tau=0.0)
