"""
Synthetic generator tests.
"""

import numpy as np
import pytest

from dataio.synth import (
    SynthSpec,
    build_topology,
    city_directories,
    load_city,
    load_synth_spec,
    synth_cities,
    synth_generate,
)
from utils.errors import ConfigError
from utils.rng import XorShiftRNG


class TestSynthGenerate:
    """Test suite for synth_generate."""

    @pytest.mark.smoke
    @pytest.mark.data
    def test_ring_shape(self):
        """Test a ring of 8 nodes over 2 days at 5 minutes gives 576×8."""
        spec = SynthSpec(n_nodes=8, topology="ring", days=2.0)
        network, series = synth_generate(spec, XorShiftRNG(1))

        assert series.values.shape == (576, 8)
        assert network.n_nodes == 8
        assert network.n_edges == 16
        assert np.all(np.isfinite(series.values))

    @pytest.mark.data
    def test_quiet_spec_is_constant(self):
        """Test no noise, amplitude or pulses leaves the base level."""
        spec = SynthSpec(
            amplitude=0.0, noise_sigma=0.0, pulses_per_day=0.0, base_level=55.0, days=0.5
        )

        _, series = synth_generate(spec, XorShiftRNG(2))

        assert np.all(series.values == 55.0)

    @pytest.mark.critical
    @pytest.mark.data
    def test_seed_determinism(self):
        """Test the same seed reproduces the city exactly."""
        spec = SynthSpec(topology="random-geometric", n_nodes=10, days=0.5)

        first = synth_generate(spec, XorShiftRNG(3))
        second = synth_generate(spec, XorShiftRNG(3))

        assert np.array_equal(first[0].adjacency, second[0].adjacency)
        assert np.array_equal(first[1].values, second[1].values)

    @pytest.mark.data
    def test_pulses_lower_speed(self):
        """Test congestion pulses only ever subtract from the level."""
        spec = SynthSpec(
            amplitude=0.0, noise_sigma=0.0, pulses_per_day=6.0, base_level=60.0, days=1.0
        )

        _, series = synth_generate(spec, XorShiftRNG(4))

        assert series.values.max() <= 60.0 + 1e-12
        assert series.values.min() < 60.0

    @pytest.mark.graph
    @pytest.mark.data
    @pytest.mark.parametrize(
        "topology, nodes", [("ring", 6), ("grid", 12), ("random-geometric", 15)]
    )
    def test_topologies_connected(self, topology, nodes):
        """Test every topology yields a connected graph on 0..n−1."""
        import networkx as nx

        graph = build_topology(SynthSpec(topology=topology, n_nodes=nodes), XorShiftRNG(5))

        assert sorted(graph.nodes) == list(range(nodes))
        assert nx.is_connected(graph)


class TestCityFiles:
    """Test suite for multi-city output."""

    @pytest.mark.data
    def test_cities_round_trip(self, tmp_path):
        """Test written cities reload with their values and graph."""
        spec = SynthSpec(n_nodes=5, days=0.25)

        paths = synth_cities(spec, 3, tmp_path, XorShiftRNG(6))
        network, series = load_city(paths[1])

        assert [p.name for p in city_directories(tmp_path)] == ["city_000", "city_001", "city_002"]
        assert series.values.shape == (spec.n_steps, 5)
        assert network.n_nodes == 5
        assert (paths[0] / "truth.csv").exists()

    @pytest.mark.data
    def test_cities_differ(self, tmp_path):
        """Test each city gets its own random stream."""
        paths = synth_cities(SynthSpec(n_nodes=4, days=0.25), 2, tmp_path, XorShiftRNG(7))

        assert not np.array_equal(load_city(paths[0])[1].values, load_city(paths[1])[1].values)

    @pytest.mark.data
    def test_no_cities(self, tmp_path):
        """Test an empty directory is reported."""
        with pytest.raises(ConfigError, match="city_"):
            city_directories(tmp_path)


class TestSynthSpec:
    """Test suite for spec loading."""

    @pytest.mark.data
    def test_file_and_overrides(self, tmp_path):
        """Test key-value files load and overrides win."""
        path = tmp_path / "city.cfg"
        path.write_text("n_nodes = 6\ntopology = grid\nnoise_sigma = 0.1\n", encoding="utf-8")

        spec = load_synth_spec(path, {"noise_sigma": 0.0})

        assert (spec.n_nodes, spec.topology, spec.noise_sigma) == (6, "grid", 0.0)
        assert spec.n_steps == 576

    @pytest.mark.data
    def test_unknown_key(self, tmp_path):
        """Test unknown keys are rejected."""
        path = tmp_path / "city.cfg"
        path.write_text("lanes = 3\n", encoding="utf-8")

        with pytest.raises(ConfigError):
            load_synth_spec(path)

    @pytest.mark.data
    def test_day_length(self):
        """Test step counts follow days and interval."""
        assert SynthSpec(days=1.0, interval_minutes=10.0).n_steps == 144
