"""
Graph operators as torch tensors, computed once per network and shared by
every forward pass on that network.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from graphcore.network import TrafficNetwork
from graphcore.spectral import LaplacianPair, SpectralBasis, eigendecompose, laplacians
from utils.logger import get_logger

logger = get_logger(__name__)

DTYPE = torch.float64


@dataclass(frozen=True)
class GraphContext:
    """Everything a forward pass needs to know about the graph."""

    network: TrafficNetwork
    laplacians: LaplacianPair
    basis: Optional[SpectralBasis]
    lap_comb: torch.Tensor
    adjacency: torch.Tensor
    propagation: torch.Tensor
    eigvecs: Optional[torch.Tensor]
    gap: float

    @property
    def n_nodes(self) -> int:
        return self.network.n_nodes

    @property
    def has_spectrum(self) -> bool:
        return self.basis is not None


def _tensor(array: np.ndarray) -> torch.Tensor:
    return torch.tensor(np.array(array, dtype=np.float64), dtype=DTYPE)


def _inverse_sqrt(degrees: np.ndarray) -> np.ndarray:
    return np.divide(1.0, np.sqrt(degrees), out=np.zeros_like(degrees), where=degrees > 0)


def propagation_matrix(adjacency: np.ndarray) -> np.ndarray:
    """
    D_out^{-1/2} A D_in^{-1/2}, the symmetric normalization for undirected graphs.

    A directed sink (no out-edges) or source (no in-edges) gets a zero row or
    column instead of a division by zero.
    """
    return (
        _inverse_sqrt(adjacency.sum(axis=1))[:, None]
        * adjacency
        * _inverse_sqrt(adjacency.sum(axis=0))[None, :]
    )


def build_context(
    net: TrafficNetwork, k_spectral: int, keep_directed: bool = False
) -> GraphContext:
    """
    Derive Laplacians, spectrum and propagation matrices for ``net``.

    The spectral basis is omitted when the network is kept directed.
    """
    pair = laplacians(net, keep_directed=keep_directed)
    working = net if keep_directed else net.symmetrized()
    basis = eigendecompose(pair, k_spectral) if pair.normalized is not None else None
    if basis is None:
        logger.warning("Directed network kept directed: spectral phase disabled")

    adjacency = working.adjacency
    propagation = propagation_matrix(adjacency)

    return GraphContext(
        network=working,
        laplacians=pair,
        basis=basis,
        lap_comb=_tensor(pair.combinatorial),
        adjacency=_tensor(adjacency),
        propagation=_tensor(propagation),
        eigvecs=_tensor(basis.retained) if basis is not None else None,
        gap=basis.gap if basis is not None else 0.0,
    )
