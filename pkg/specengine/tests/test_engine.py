"""
Spectral phase tests.
"""

import pytest
import torch

from gradcore.init import initialize_parameters, zero_parameters
from graphcore.context import build_context
from specengine.engine import SpectralPhase, spectral_features, spectral_predict
from utils.rng import XorShiftRNG


def seeded_phase(k=3, width=8, horizon=4, seed=3) -> SpectralPhase:
    phase = SpectralPhase(k, width, horizon)
    initialize_parameters(phase, XorShiftRNG(seed))
    return phase


class TestSpectralFeatures:
    """Test suite for spectral_features."""

    @pytest.mark.smoke
    @pytest.mark.spectral
    def test_zero_params(self, cycle4_network):
        """Test zero parameters give zero features with the gap intact."""
        context = build_context(cycle4_network, k_spectral=4)
        phase = SpectralPhase(4, 8, 3)
        zero_parameters(phase)

        features = spectral_features(context.eigvecs, context.gap, phase, batch=2)

        assert features.f_spec.shape == (2, 4, 2)
        assert not features.f_spec.any()
        assert features.gap == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.spectral
    def test_broadcast_over_batch(self, random_network):
        """Test every batch element sees identical features."""
        context = build_context(random_network(6, seed=2), k_spectral=3)

        features = spectral_features(context.eigvecs, context.gap, seeded_phase(), batch=3)

        assert torch.equal(features.f_spec[0], features.f_spec[1])
        assert torch.equal(features.f_spec[1], features.f_spec[2])


class TestSpectralPredict:
    """Test suite for spectral_predict."""

    @pytest.mark.spectral
    def test_zero_params(self, cycle4_network):
        """Test zero parameters give zeros."""
        context = build_context(cycle4_network, k_spectral=2)
        phase = SpectralPhase(2, 4, 3)
        zero_parameters(phase)

        assert not spectral_predict(context.eigvecs, context.gap, phase, batch=1).any()

    @pytest.mark.spectral
    def test_shape(self, random_network):
        """Test output shape (B, N, H)."""
        context = build_context(random_network(5, seed=1), k_spectral=3)

        out = spectral_predict(context.eigvecs, context.gap, seeded_phase(), batch=2)

        assert out.shape == (2, 5, 4)

    @pytest.mark.spectral
    def test_permutation_equivariance(self, random_network):
        """Test relabelling nodes permutes output rows identically."""
        net = random_network(7, seed=4, extra_edges=9)
        order = [3, 0, 6, 1, 5, 2, 4]
        phase = seeded_phase()
        context = build_context(net, k_spectral=3)
        eigvecs = context.eigvecs
        # relabelled graph, with eigenvectors relabelled consistently
        permuted_vectors = eigvecs[order]

        base = spectral_predict(eigvecs, context.gap, phase, batch=1)
        gap = build_context(net.permuted(order), 3).gap
        permuted = spectral_predict(permuted_vectors, gap, phase, batch=1)

        assert torch.allclose(permuted[0], base[0][order], atol=1e-12)

    @pytest.mark.spectral
    def test_wrong_eigenvector_count(self, cycle4_network):
        """Test the module rejects a basis of the wrong width."""
        context = build_context(cycle4_network, k_spectral=2)

        with pytest.raises(ValueError):
            seeded_phase(k=3)(context.eigvecs, context.gap, batch=1)
