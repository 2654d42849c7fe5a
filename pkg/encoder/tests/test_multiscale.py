"""
Full encoder tests.
"""

import pytest
import torch

from encoder.multiscale import EncoderConfig, MultiScaleEncoder
from gradcore.autodiff import finite_difference_check
from gradcore.init import initialize_parameters
from utils.rng import XorShiftRNG

CHANNELS, PHASE = 2, 3


def build(hidden=2, heads=2, layers=1, multiscale=True, seed=12) -> MultiScaleEncoder:
    cfg = EncoderConfig(hidden=hidden, heads=heads, layers=layers, multiscale=multiscale)
    encoder = MultiScaleEncoder(CHANNELS, PHASE, cfg)
    initialize_parameters(encoder, XorShiftRNG(seed))
    return encoder.eval()


def inputs(gen: XorShiftRNG, nodes: int, steps=8, batch=2):
    x = torch.tensor(gen.normal((batch, steps, nodes, CHANNELS)), dtype=torch.float64)
    f_phase = torch.tensor(gen.normal((batch, nodes, PHASE)), dtype=torch.float64)
    return x, f_phase


class TestMultiScaleEncoder:
    """Test suite for MultiScaleEncoder."""

    @pytest.mark.smoke
    @pytest.mark.encoder
    def test_output_shape(self, rng, small_context):
        """Test H_mem has shape B×T×N×4h."""
        encoder = build(hidden=3)
        x, f_phase = inputs(rng, small_context.n_nodes)

        out = encoder(x, f_phase, small_context.propagation)

        assert out.shape == (2, 8, small_context.n_nodes, 12)

    @pytest.mark.encoder
    def test_eval_bit_identical(self, rng, small_context):
        """Test identical inputs give bit-identical outputs in eval mode."""
        encoder = build()
        x, f_phase = inputs(rng, small_context.n_nodes)

        first = encoder(x, f_phase, small_context.propagation)
        second = encoder(x, f_phase, small_context.propagation)

        assert torch.equal(first, second)

    @pytest.mark.encoder
    def test_single_scale_variant(self, rng, small_context):
        """Test disabling multi-scale keeps one LSTM and the same output width."""
        encoder = build(multiscale=False)
        x, f_phase = inputs(rng, small_context.n_nodes)

        out = encoder(x, f_phase, small_context.propagation)

        assert len(encoder.cells) == 1
        assert out.shape[-1] == 8

    @pytest.mark.encoder
    def test_alpha_mem_named(self):
        """Test the memory residual weight starts at 0.1."""
        names = dict(build().named_parameters())

        assert names["alpha_mem"].item() == pytest.approx(0.1)

    @pytest.mark.slow
    @pytest.mark.grad
    @pytest.mark.encoder
    @pytest.mark.timeout(600)
    def test_gradient_check(self, rng, small_context):
        """Test the full encoder against central differences on B=2, T=8, N=4."""
        encoder = build()
        x, f_phase = inputs(rng, small_context.n_nodes)
        target = torch.tensor(rng.normal((2, 8, small_context.n_nodes, 8)), dtype=torch.float64)

        def loss_fn():
            return ((encoder(x, f_phase, small_context.propagation) - target) ** 2).mean()

        assert finite_difference_check(loss_fn, encoder.named_parameters(), epsilon=1e-5) <= 1e-4
