"""
Consensus fusion tests.
"""

import math

import pytest
import torch

from fusion.consensus import (
    AttentionWeights,
    ConsensusFusion,
    PhaseBundle,
    attention_weights,
    residual_fuse,
    weighted_combine,
)
from gradcore.autodiff import finite_difference_check
from gradcore.init import initialize_parameters, zero_parameters
from utils.errors import ShapeError
from utils.rng import XorShiftRNG

WIDTH = 8


def make_bundle(gen: XorShiftRNG, batch=2, nodes=3, horizon=4, scale=1.0) -> PhaseBundle:
    def draw(*shape):
        return scale * torch.tensor(gen.normal(shape), dtype=torch.float64)

    return PhaseBundle(
        f_diff=draw(batch, nodes, WIDTH),
        f_sync=draw(batch, nodes, WIDTH + 2),
        f_spec=draw(batch, nodes, WIDTH // 4),
        v_diff=draw(batch, nodes, horizon),
        v_sync=draw(batch, nodes, horizon),
        v_spec=draw(batch, nodes, horizon),
    )


def seeded_fusion(seed=9) -> ConsensusFusion:
    fusion = ConsensusFusion(WIDTH)
    initialize_parameters(fusion, XorShiftRNG(seed))
    return fusion


class TestAttentionWeights:
    """Test suite for attention_weights."""

    @pytest.mark.smoke
    @pytest.mark.fusion
    def test_zero_params_uniform(self, rng):
        """Test zero parameters give (1/3, 1/3, 1/3)."""
        fusion = ConsensusFusion(WIDTH)
        zero_parameters(fusion)

        weights = attention_weights(make_bundle(rng), fusion)

        uniform = torch.full((2, 3, 3), 1.0 / 3.0, dtype=torch.float64)
        assert torch.allclose(weights.alpha, uniform, atol=1e-15)

    @pytest.mark.fusion
    def test_logit_hand_case(self, rng):
        """Test logits (ln 2, 0, 0) give (0.5, 0.25, 0.25)."""
        fusion = ConsensusFusion(WIDTH)
        zero_parameters(fusion)
        with torch.no_grad():
            fusion.attn_out.bias.copy_(torch.tensor([math.log(2.0), 0.0, 0.0], dtype=torch.float64))

        alpha = attention_weights(make_bundle(rng, batch=1, nodes=1), fusion).alpha

        assert alpha.reshape(-1).tolist() == pytest.approx([0.5, 0.25, 0.25], abs=1e-15)

    @pytest.mark.critical
    @pytest.mark.fusion
    @pytest.mark.property
    def test_simplex_rows(self, rng):
        """Test random inputs give rows summing to one within 1e-12."""
        weights = attention_weights(make_bundle(rng, batch=4, nodes=6, scale=5.0), seeded_fusion())

        assert (weights.alpha >= 0).all()
        assert weights.simplex_deviation() <= 1e-12

    @pytest.mark.fusion
    def test_disabled_phase_masked(self, rng):
        """Test a disabled phase receives zero weight."""
        enabled = (True, False, True)
        alpha = attention_weights(make_bundle(rng), seeded_fusion(), enabled=enabled).alpha

        assert not alpha[..., 1].any()
        assert AttentionWeights(alpha).simplex_deviation() <= 1e-12

    @pytest.mark.fusion
    def test_fixed_uniform_weights(self, rng):
        """Test non-adaptive fusion is uniform over enabled phases."""
        alpha = attention_weights(make_bundle(rng), seeded_fusion(), enabled=(True, True, False),
                                  adaptive=False).alpha

        assert torch.allclose(alpha[..., :2], torch.full((2, 3, 2), 0.5, dtype=torch.float64))

    @pytest.mark.fusion
    def test_all_disabled_rejected(self, rng):
        """Test disabling every phase is an error."""
        with pytest.raises(ValueError):
            attention_weights(make_bundle(rng), seeded_fusion(), enabled=(False, False, False))


class TestWeightedCombine:
    """Test suite for weighted_combine."""

    @pytest.mark.fusion
    def test_one_hot_selects_diffusion(self, rng):
        """Test α = (1, 0, 0) returns exactly the projected diffusion block."""
        fusion = seeded_fusion()
        bundle = make_bundle(rng)
        alpha = torch.zeros(2, 3, 3, dtype=torch.float64)
        alpha[..., 0] = 1.0

        out = weighted_combine(bundle, alpha, fusion)

        assert torch.equal(out, fusion.proj_diff(bundle.f_diff))

    @pytest.mark.fusion
    def test_convexity(self, rng):
        """Test uniform α over identical projected blocks returns the block."""
        fusion = ConsensusFusion(WIDTH)
        zero_parameters(fusion)
        with torch.no_grad():
            for layer in (fusion.proj_diff, fusion.proj_sync, fusion.proj_spec):
                layer.bias.copy_(torch.linspace(-1.0, 1.0, fusion.total_width, dtype=torch.float64))
        alpha = torch.full((2, 3, 3), 1.0 / 3.0, dtype=torch.float64)

        out = weighted_combine(make_bundle(rng), alpha, fusion)

        ramp = torch.linspace(-1.0, 1.0, fusion.total_width, dtype=torch.float64)
        expected = ramp.expand(2, 3, -1)
        assert torch.allclose(out, expected, atol=1e-15)

    @pytest.mark.fusion
    def test_linearity(self, rng):
        """Test doubling every block doubles the output with zero biases."""
        fusion = seeded_fusion()
        with torch.no_grad():
            for layer in (fusion.proj_diff, fusion.proj_sync, fusion.proj_spec):
                layer.bias.zero_()
        bundle = make_bundle(rng)
        doubled = PhaseBundle(*(2.0 * getattr(bundle, name) for name in
                                ("f_diff", "f_sync", "f_spec", "v_diff", "v_sync", "v_spec")))
        alpha = attention_weights(bundle, fusion).alpha

        expected = 2.0 * weighted_combine(bundle, alpha, fusion)
        assert torch.allclose(weighted_combine(doubled, alpha, fusion), expected, atol=1e-13)


class TestResidualFuse:
    """Test suite for residual_fuse."""

    @pytest.mark.fusion
    def test_zero_params_pass_through(self, rng):
        """Test zero fuse parameters return the diffusion state exactly."""
        fusion = ConsensusFusion(WIDTH)
        zero_parameters(fusion)
        t_final = torch.tensor(rng.normal((2, 3, WIDTH)), dtype=torch.float64)

        weighted = torch.randn(2, 3, fusion.total_width, dtype=torch.float64)
        out = residual_fuse(weighted, t_final, fusion)

        assert torch.equal(out, t_final)

    @pytest.mark.fusion
    def test_shape_and_identity_residual(self, rng):
        """Test output shape (B, N, D) and an identity residual at matching widths."""
        fusion, bundle = seeded_fusion(), make_bundle(rng)

        _, fused = fusion(bundle)

        assert fused.shape == (2, 3, WIDTH)
        assert isinstance(fusion.residual, torch.nn.Identity)

    @pytest.mark.grad
    @pytest.mark.fusion
    def test_residual_gradient(self, rng):
        """Test the fused output's gradient w.r.t. T⁽ᴷ⁾ carries the identity path."""
        fusion = ConsensusFusion(WIDTH)
        zero_parameters(fusion)
        holder = torch.nn.Module()
        t_final = torch.tensor(rng.normal((1, 2, WIDTH)), dtype=torch.float64)
        holder.t_final = torch.nn.Parameter(t_final)
        weighted = torch.randn(1, 2, fusion.total_width, dtype=torch.float64)

        def loss_fn():
            return residual_fuse(weighted, holder.t_final, fusion).sum()

        loss_fn().backward()

        assert torch.equal(holder.t_final.grad, torch.ones(1, 2, WIDTH, dtype=torch.float64))
        assert finite_difference_check(loss_fn, holder.named_parameters()) <= 1e-9


class TestPhaseBundle:
    """Test suite for PhaseBundle."""

    @pytest.mark.fusion
    def test_misaligned_blocks(self, rng):
        """Test blocks with different node counts are rejected."""
        bundle = make_bundle(rng)

        with pytest.raises(ShapeError):
            PhaseBundle(
                bundle.f_diff,
                bundle.f_sync[:, :2],
                bundle.f_spec,
                bundle.v_diff,
                bundle.v_sync,
                bundle.v_spec,
            )

    @pytest.mark.fusion
    def test_concatenated_width(self, rng):
        """Test F_cat has width D + (D + 2) + D/4."""
        assert make_bundle(rng).concatenated.shape[-1] == WIDTH + WIDTH + 2 + WIDTH // 4
