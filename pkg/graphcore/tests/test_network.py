"""
Network construction tests.

Covers edge assembly, invariant enforcement and the adjacency CSV format.
"""

import numpy as np
import pytest

from graphcore.network import build_network, from_adjacency, load_adjacency_csv, write_adjacency_csv
from utils.errors import DataFormatError, GraphConstructionError


class TestBuildNetwork:
    """Test suite for build_network."""

    @pytest.mark.smoke
    @pytest.mark.graph
    def test_two_node_complete_graph(self):
        """Test K2 from mirrored edges."""
        net = build_network(2, [(0, 1, 1.0), (1, 0, 1.0)])

        assert np.array_equal(net.adjacency, [[0.0, 1.0], [1.0, 0.0]])
        assert not net.directed_flag

    @pytest.mark.graph
    def test_self_loop_rejected(self):
        """Test self-loop edge raises."""
        with pytest.raises(GraphConstructionError, match="self-loop"):
            build_network(3, [(0, 0, 1.0)])

    @pytest.mark.graph
    def test_isolated_node_rejected(self):
        """Test a node without edges raises."""
        with pytest.raises(GraphConstructionError, match="isolated"):
            build_network(3, [(0, 1, 1.0), (1, 0, 1.0)])

    @pytest.mark.graph
    def test_duplicate_edges_summed(self):
        """Test duplicate edges have their weights summed."""
        net = build_network(2, [(0, 1, 1.0), (0, 1, 0.5), (1, 0, 1.5)])

        assert net.adjacency[0, 1] == 1.5
        assert not net.directed_flag

    @pytest.mark.graph
    def test_one_directional_edges_are_directed(self):
        """Test missing mirror edges leave the network directed."""
        net = build_network(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])

        assert net.directed_flag

    @pytest.mark.graph
    def test_symmetrize_flag(self):
        """Test symmetrize averages A and its transpose."""
        net = build_network(2, [(0, 1, 2.0)], symmetrize=True)

        assert np.array_equal(net.adjacency, [[0.0, 1.0], [1.0, 0.0]])
        assert not net.directed_flag

    @pytest.mark.graph
    @pytest.mark.parametrize("edge", [(0, 3, 1.0), (-1, 0, 1.0), (0, 1, 0.0), (0, 1, -2.0)])
    def test_invalid_edges_rejected(self, edge):
        """Test out-of-range indices and non-positive weights raise."""
        with pytest.raises(GraphConstructionError):
            build_network(3, [edge, (1, 2, 1.0), (2, 1, 1.0)])

    @pytest.mark.graph
    def test_adjacency_is_read_only(self, k2_network):
        """Test networks are immutable after construction."""
        with pytest.raises(ValueError):
            k2_network.adjacency[0, 1] = 5.0

    @pytest.mark.graph
    @pytest.mark.slow
    def test_metr_la_scale_network(self, rng):
        """Test a 207-node, 1722-edge network loads."""
        n = 207
        edges = set()
        for i in range(n):
            j = (i + 1) % n
            edges.add((min(i, j), max(i, j)))
        while len(edges) < 861:
            i, j = rng.integer(0, n), rng.integer(0, n)
            if i != j:
                edges.add((min(i, j), max(i, j)))
        triples = [(i, j, 1.0) for i, j in edges] + [(j, i, 1.0) for i, j in edges]

        net = build_network(n, triples)

        assert net.n_nodes == 207
        assert net.n_edges == 1722


class TestAdjacencyCsv:
    """Test suite for the adjacency file format."""

    @pytest.mark.graph
    def test_round_trip(self, tmp_path, path3_network):
        """Test writing then reading reproduces the adjacency."""
        target = tmp_path / "adj.csv"
        write_adjacency_csv(path3_network, target)

        loaded = load_adjacency_csv(target)

        assert np.array_equal(loaded.adjacency, path3_network.adjacency)
        assert target.read_text(encoding="utf-8").splitlines()[0] == "src,dst,weight"

    @pytest.mark.graph
    def test_bad_header_rejected(self, tmp_path):
        """Test a wrong header raises DataFormatError."""
        target = tmp_path / "adj.csv"
        target.write_text("from,to,w\n0,1,1.0\n", encoding="utf-8")

        with pytest.raises(DataFormatError, match="header"):
            load_adjacency_csv(target)

    @pytest.mark.graph
    def test_explicit_node_count(self, tmp_path):
        """Test n_nodes larger than the max index leaves isolated nodes and fails."""
        target = tmp_path / "adj.csv"
        target.write_text("src,dst,weight\n0,1,1.0\n1,0,1.0\n", encoding="utf-8")

        with pytest.raises(GraphConstructionError, match="isolated"):
            load_adjacency_csv(target, n_nodes=3)

    @pytest.mark.graph
    def test_from_adjacency_rejects_negative(self):
        """Test negative weights raise."""
        with pytest.raises(GraphConstructionError, match="non-negative"):
            from_adjacency([[0.0, -1.0], [-1.0, 0.0]])
