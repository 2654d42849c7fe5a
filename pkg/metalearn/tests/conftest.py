"""
Shared synthetic city for meta-learning tests.
"""

import pytest

from dataio.dataset import prepare_city
from dataio.synth import SynthSpec, synth_generate
from utils.rng import XorShiftRNG


@pytest.fixture(scope="module")
def small_city(small_config):
    spec = SynthSpec(n_nodes=4, days=0.5, noise_sigma=0.2)
    network, series = synth_generate(spec, XorShiftRNG(31))
    return prepare_city(network, series, small_config)
