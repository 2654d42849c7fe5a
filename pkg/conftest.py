"""
Root conftest.py for pytest configuration and global fixtures.

Provides seeded generators, canonical graphs and small model configurations
shared by every package's tests.
"""

import sys
from pathlib import Path
from typing import Callable

import numpy as np
import pytest
import torch

# Add project root to Python path
ROOT_DIR = Path(__file__).parent
sys.path.insert(0, str(ROOT_DIR))

from config.settings import RunConfig, settings
from graphcore.context import GraphContext, build_context
from graphcore.network import TrafficNetwork, build_network
from utils.logger import get_logger
from utils.rng import XorShiftRNG

logger = get_logger(__name__)


# ========================================
# Pytest Configuration Hooks
# ========================================


def pytest_configure(config):
    """Pytest configuration hook."""
    torch.use_deterministic_algorithms(True)
    logger.info("=" * 80)
    logger.info("MCPST - Starting Test Execution")
    logger.info("=" * 80)
    logger.info(f"Seed fallback: {settings.seed}")
    logger.info(f"Torch: {torch.__version__}, threads: {torch.get_num_threads()}")
    logger.info("=" * 80)

    settings.create_directories()


def pytest_sessionfinish(session, exitstatus):
    """Pytest session finish hook."""
    logger.info("=" * 80)
    logger.info("Test Execution Completed")
    logger.info(f"Exit Status: {exitstatus}")
    logger.info("=" * 80)


def pytest_runtest_setup(item):
    """Hook called before each test."""
    logger.debug(f"Running test: {item.nodeid}")


# ========================================
# Randomness
# ========================================


@pytest.fixture
def rng() -> XorShiftRNG:
    """Seeded xorshift stream."""
    return XorShiftRNG(1234)


# ========================================
# Graph Fixtures
# ========================================


@pytest.fixture(scope="session")
def k2_network() -> TrafficNetwork:
    """Two-node complete graph."""
    return build_network(2, [(0, 1, 1.0), (1, 0, 1.0)])


@pytest.fixture(scope="session")
def path3_network() -> TrafficNetwork:
    """Unit-weight path 0-1-2."""
    return build_network(3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)])


@pytest.fixture(scope="session")
def cycle4_network() -> TrafficNetwork:
    """Unit-weight 4-cycle."""
    edges = []
    for i in range(4):
        j = (i + 1) % 4
        edges += [(i, j, 1.0), (j, i, 1.0)]
    return build_network(4, edges)


def make_random_network(n: int, seed: int, extra_edges: int = 0) -> TrafficNetwork:
    """Connected random graph: a ring plus random chords with weights in [0.5, 1.5]."""
    gen = XorShiftRNG(seed)
    weights = {}
    for i in range(n):
        j = (i + 1) % n
        if i != j:
            weights[(min(i, j), max(i, j))] = 0.5 + gen.random()
    for _ in range(extra_edges or n):
        i, j = gen.integer(0, n), gen.integer(0, n)
        if i != j:
            weights[(min(i, j), max(i, j))] = 0.5 + gen.random()
    edges = [(i, j, w) for (i, j), w in weights.items()]
    edges += [(j, i, w) for i, j, w in list(edges)]
    return build_network(n, edges)


@pytest.fixture(scope="session")
def random_network() -> Callable[..., TrafficNetwork]:
    """Factory for seeded connected random graphs."""
    return make_random_network


# ========================================
# Model Fixtures
# ========================================


@pytest.fixture(scope="session")
def small_config() -> RunConfig:
    """Tiny model configuration for fast forward/backward tests."""
    return RunConfig(
        seed=7,
        history=8,
        horizon=4,
        hidden=8,
        enc_hidden=4,
        heads=2,
        layers=1,
        k_spectral=3,
        k_diff=6,
        k_sync=10,
        batch_size=4,
    )


@pytest.fixture(scope="session")
def small_context(small_config) -> GraphContext:
    """Random 4-node graph context matching small_config."""
    return build_context(make_random_network(4, seed=11), k_spectral=small_config.k_spectral)


@pytest.fixture
def small_inputs(small_config, small_context):
    """Seeded (x, y) batch with B = 2 for small_config."""
    gen = XorShiftRNG(99)
    channels = 5 if small_config.augment_features else 1
    x = torch.tensor(
        gen.normal((2, small_config.history, small_context.n_nodes, channels)), dtype=torch.float64
    )
    y = torch.tensor(
        gen.normal((2, small_context.n_nodes, small_config.horizon)), dtype=torch.float64
    )
    return x, y


@pytest.fixture
def to_tensor() -> Callable[[np.ndarray], torch.Tensor]:
    """Convert numpy arrays to float64 tensors."""
    return lambda array: torch.tensor(np.asarray(array, dtype=np.float64), dtype=torch.float64)
