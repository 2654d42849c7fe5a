"""
Graph Laplacians and the symmetric eigendecomposition of the normalized one.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from graphcore.network import TrafficNetwork
from utils.errors import SpectralError
from utils.logger import get_logger

logger = get_logger(__name__)

SYMMETRY_TOL = 1e-12
SIGN_TOL = 1e-10
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class LaplacianPair:
    """Combinatorial L = diag(A·1) − A and normalized I − D^{-1/2} A D^{-1/2}.

    ``normalized`` is None when a directed network is kept directed.
    """

    combinatorial: np.ndarray
    normalized: Optional[np.ndarray]

    @property
    def n_nodes(self) -> int:
        return self.combinatorial.shape[0]

    @property
    def max_degree(self) -> float:
        return float(np.max(np.diag(self.combinatorial)))


@dataclass(frozen=True)
class SpectralBasis:
    """Ascending eigenvalues, orthonormal eigenvectors (columns), retained count and gap."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    k_retained: int
    gap: float

    @property
    def retained(self) -> np.ndarray:
        """Ψ_{:, :K} as an N × K matrix."""
        return self.eigenvectors[:, : self.k_retained]


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix.setflags(write=False)
    return matrix


def laplacians(net: TrafficNetwork, keep_directed: bool = False) -> LaplacianPair:
    """
    Build both Laplacians.

    Directed networks are symmetrized as (A + Aᵀ)/2 first, unless
    ``keep_directed`` is set; then only the combinatorial Laplacian of the
    directed adjacency is produced.
    """
    if net.directed_flag and not keep_directed:
        logger.info("Symmetrizing directed adjacency as (A + Aᵀ)/2")
        net = net.symmetrized()
    adjacency = net.adjacency
    degrees = adjacency.sum(axis=1)
    combinatorial = np.diag(degrees) - adjacency
    if net.directed_flag:
        return LaplacianPair(combinatorial=_frozen(combinatorial), normalized=None)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    normalized = np.eye(net.n_nodes) - inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]
    # exact symmetry for the eigen-solver
    normalized = 0.5 * (normalized + normalized.T)
    return LaplacianPair(combinatorial=_frozen(combinatorial), normalized=_frozen(normalized))


def _normalize_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for col in range(out.shape[1]):
        significant = np.flatnonzero(np.abs(out[:, col]) > SIGN_TOL)
        if significant.size and out[significant[0], col] < 0:
            out[:, col] = -out[:, col]
    return out


def _order_degenerate(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Within each cluster of equal eigenvalues, sort columns lexicographically."""
    order = np.arange(values.size)
    start = 0
    while start < values.size:
        stop = start + 1
        while stop < values.size and values[stop] - values[start] <= DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            # np.lexsort uses its last key as primary, so feed rows reversed
            ranking = np.lexsort(block[::-1, :])
            order[start:stop] = start + ranking
        start = stop
    return vectors[:, order]


def eigendecompose(lap: LaplacianPair, k: int) -> SpectralBasis:
    """
    Full symmetric eigendecomposition of the normalized Laplacian.

    Eigenvectors are sign-normalized (first entry above 1e-10 in magnitude is
    positive); degenerate eigenvalues have their vectors ordered
    lexicographically, so output is reproducible bit for bit.

    Raises:
        SpectralError: k outside 1..n, missing or non-symmetric normalized Laplacian
    """
    if lap.normalized is None:
        raise SpectralError("no normalized Laplacian: directed network kept directed")
    matrix = lap.normalized
    n = matrix.shape[0]
    if not 1 <= k <= n:
        raise SpectralError(f"k must be within 1..{n}, got {k}")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise SpectralError("normalized Laplacian is not symmetric")

    values, vectors = np.linalg.eigh(matrix)
    vectors = _order_degenerate(values, _normalize_signs(vectors))
    gap = float(values[1] - values[0]) if n > 1 else 0.0
    logger.debug(f"Spectrum n={n}: lambda_1={values[0]:.3e}, gap={gap:.6f}")
    return SpectralBasis(
        eigenvalues=_frozen(values),
        eigenvectors=_frozen(np.ascontiguousarray(vectors)),
        k_retained=k,
        gap=gap,
    )
