"""
Horizon head and neural consensus tests.
"""

import math

import pytest
import torch

from gradcore.init import initialize_parameters, zero_parameters
from predict.heads import HorizonHead, HorizonHeads, horizon_split, neural_consensus
from utils.rng import XorShiftRNG


def draw(gen: XorShiftRNG, *shape) -> torch.Tensor:
    return torch.tensor(gen.normal(shape), dtype=torch.float64)


class TestHorizonSplit:
    """Test suite for horizon_split."""

    @pytest.mark.smoke
    @pytest.mark.predict
    @pytest.mark.parametrize(
        "horizon, expected",
        [(12, (3, 3, 6)), (3, (1, 1, 1)), (4, (1, 1, 2)), (7, (1, 1, 5)), (24, (6, 6, 12))],
    )
    def test_split(self, horizon, expected):
        """Test short = medium = max(1, H // 4) and long takes the rest."""
        assert horizon_split(horizon) == expected
        assert sum(horizon_split(horizon)) == horizon

    @pytest.mark.predict
    def test_too_short(self):
        """Test horizons below three are rejected."""
        with pytest.raises(ValueError, match="horizon"):
            horizon_split(2)


class TestHorizonHeads:
    """Test suite for HorizonHead / HorizonHeads."""

    @pytest.mark.smoke
    @pytest.mark.predict
    def test_shapes_h12(self):
        """Test 3/3/6 split and concatenated B×N×12 outputs."""
        heads = HorizonHeads(8, 12)
        initialize_parameters(heads, XorShiftRNG(3))

        out = heads(draw(XorShiftRNG(4), 2, 5, 8))

        assert out.y_hat.shape == (2, 5, 12)
        assert out.sigma2.shape == (2, 5, 12)
        assert out.short.shape[-1] == 3
        assert out.medium.shape[-1] == 3
        assert out.long.shape[-1] == 6
        assert torch.equal(out.long, out.y_hat[..., 6:])

    @pytest.mark.predict
    def test_zero_variance_params_give_ln2(self):
        """Test zero variance weights give σ² = softplus(0) = ln 2."""
        head = HorizonHead(8, 3, 2)
        initialize_parameters(head, XorShiftRNG(5))
        with torch.no_grad():
            head.var_out.weight.zero_()

        _, sigma2 = head(draw(XorShiftRNG(6), 2, 4, 8))

        assert torch.allclose(sigma2, torch.full_like(sigma2, math.log(2.0)), atol=1e-15)

    @pytest.mark.predict
    def test_zero_params_give_final_bias(self):
        """Test all-zero heads forecast exactly the final bias."""
        head = HorizonHead(8, 3, 3)
        zero_parameters(head)
        bias = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)
        with torch.no_grad():
            head.final.bias.copy_(bias)

        y_hat, _ = head(draw(XorShiftRNG(7), 2, 4, 8))

        assert torch.equal(y_hat, bias.expand(2, 4, 3))

    @pytest.mark.predict
    def test_variance_positive(self):
        """Test σ² > 0 for random inputs."""
        heads = HorizonHeads(8, 6)
        initialize_parameters(heads, XorShiftRNG(8))

        out = heads(draw(XorShiftRNG(9), 3, 4, 8))

        assert bool((out.sigma2 > 0).all())


class TestNeuralConsensus:
    """Test suite for neural_consensus."""

    @pytest.mark.predict
    def test_beta_zero_keeps_model(self):
        """Test β_c = 0 returns the head forecast."""
        gen = XorShiftRNG(10)
        y_model, v1, v2, v3 = (draw(gen, 2, 3, 4) for _ in range(4))
        alpha = torch.softmax(draw(gen, 2, 3, 3), dim=-1)

        out = neural_consensus(y_model, v1, v2, v3, alpha, torch.tensor(0.0, dtype=torch.float64))

        assert torch.equal(out, y_model)

    @pytest.mark.predict
    def test_beta_one_gives_weighted_phases(self):
        """Test β_c = 1 returns Σ α_i Ṽ_i."""
        gen = XorShiftRNG(11)
        y_model, v1, v2, v3 = (draw(gen, 2, 3, 4) for _ in range(4))
        alpha = torch.softmax(draw(gen, 2, 3, 3), dim=-1)

        out = neural_consensus(y_model, v1, v2, v3, alpha, torch.tensor(1.0, dtype=torch.float64))

        expected = alpha[..., 0:1] * v1 + alpha[..., 1:2] * v2 + alpha[..., 2:3] * v3
        assert torch.allclose(out, expected, atol=1e-14)

    @pytest.mark.predict
    def test_convex_bounds(self):
        """Test the blend stays inside the per-element envelope of its inputs."""
        gen = XorShiftRNG(12)
        y_model, v1, v2, v3 = (draw(gen, 2, 3, 4) for _ in range(4))
        alpha = torch.softmax(draw(gen, 2, 3, 3), dim=-1)

        out = neural_consensus(y_model, v1, v2, v3, alpha, torch.tensor(0.3, dtype=torch.float64))

        stacked = torch.stack([y_model, v1, v2, v3])
        assert bool((out <= stacked.max(dim=0).values + 1e-12).all())
        assert bool((out >= stacked.min(dim=0).values - 1e-12).all())
