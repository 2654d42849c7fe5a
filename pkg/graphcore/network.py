"""
Traffic-network representation.

A TrafficNetwork is an immutable dense weighted adjacency over ``n_nodes``
sensors. Construction validates the invariants once; every downstream
operation trusts them.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from utils.errors import DataFormatError, GraphConstructionError
from utils.logger import get_logger

logger = get_logger(__name__)

Edge = Tuple[int, int, float]

ADJACENCY_COLUMNS = ["src", "dst", "weight"]


@dataclass(frozen=True)
class TrafficNetwork:
    """Sensor graph with dense non-negative adjacency."""

    n_nodes: int
    adjacency: np.ndarray
    directed_flag: bool

    @property
    def degrees(self) -> np.ndarray:
        """Row sums A·1."""
        return self.adjacency.sum(axis=1)

    @property
    def n_edges(self) -> int:
        """Number of non-zero directed entries."""
        return int(np.count_nonzero(self.adjacency))

    def symmetrized(self) -> "TrafficNetwork":
        """Undirected copy with A ← (A + Aᵀ)/2."""
        if not self.directed_flag:
            return self
        return from_adjacency(0.5 * (self.adjacency + self.adjacency.T))

    def permuted(self, order: Sequence[int]) -> "TrafficNetwork":
        """Relabel nodes so that new node i is old node order[i]."""
        index = np.asarray(order)
        return from_adjacency(self.adjacency[np.ix_(index, index)])

    def __repr__(self) -> str:
        kind = "directed" if self.directed_flag else "undirected"
        return f"<TrafficNetwork n={self.n_nodes} nnz={self.n_edges} {kind}>"


def _validate(adjacency: np.ndarray) -> None:
    n = adjacency.shape[0]
    if adjacency.ndim != 2 or adjacency.shape != (n, n):
        raise GraphConstructionError(f"adjacency must be square, got shape {adjacency.shape}")
    if not np.all(np.isfinite(adjacency)):
        raise GraphConstructionError("adjacency contains non-finite weights")
    if np.any(adjacency < 0):
        raise GraphConstructionError("adjacency weights must be non-negative")
    loops = np.flatnonzero(np.diag(adjacency))
    if loops.size:
        raise GraphConstructionError(f"self-loop on node(s) {loops.tolist()}")
    touching = adjacency.sum(axis=0) + adjacency.sum(axis=1)
    isolated = np.flatnonzero(touching <= 0)
    if isolated.size:
        raise GraphConstructionError(f"isolated node(s) {isolated.tolist()}")


def from_adjacency(adjacency: Union[np.ndarray, Sequence[Sequence[float]]]) -> TrafficNetwork:
    """Wrap a dense adjacency matrix, validating every invariant."""
    matrix = np.array(adjacency, dtype=np.float64)
    if matrix.ndim != 2:
        raise GraphConstructionError(f"adjacency must be 2-D, got {matrix.ndim}-D")
    _validate(matrix)
    directed = not np.array_equal(matrix, matrix.T)
    matrix.setflags(write=False)
    return TrafficNetwork(n_nodes=matrix.shape[0], adjacency=matrix, directed_flag=directed)


def build_network(n_nodes: int, edges: Iterable[Edge], symmetrize: bool = False) -> TrafficNetwork:
    """
    Assemble a network from an edge list.

    Duplicate (i, j) entries have their weights summed. With ``symmetrize``
    the assembled matrix is replaced by (A + Aᵀ)/2; otherwise the result is
    undirected only when every edge comes with an equal-weight mirror.

    Args:
        n_nodes: Number of sensors
        edges: (i, j, weight) triples, 0-based
        symmetrize: Force an undirected network

    Returns:
        Validated TrafficNetwork

    Raises:
        GraphConstructionError: bad index, non-positive weight, self-loop, isolated node
    """
    if n_nodes <= 0:
        raise GraphConstructionError(f"n_nodes must be positive, got {n_nodes}")
    adjacency = np.zeros((n_nodes, n_nodes), dtype=np.float64)
    for i, j, weight in edges:
        i, j, weight = int(i), int(j), float(weight)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise GraphConstructionError(f"edge ({i}, {j}) outside 0..{n_nodes - 1}")
        if i == j:
            raise GraphConstructionError(f"self-loop edge ({i}, {j})")
        if not weight > 0:
            raise GraphConstructionError(f"edge ({i}, {j}) weight must be > 0, got {weight}")
        adjacency[i, j] += weight
    if symmetrize:
        adjacency = 0.5 * (adjacency + adjacency.T)
    network = from_adjacency(adjacency)
    logger.debug(f"Built {network!r}")
    return network


def load_adjacency_csv(path: Union[str, Path], n_nodes: Optional[int] = None,
                       symmetrize: bool = False) -> TrafficNetwork:
    """
    Read an adjacency CSV with header ``src,dst,weight``.

    Args:
        path: CSV file
        n_nodes: Node count (defaults to max index + 1)
        symmetrize: Force an undirected network

    Returns:
        TrafficNetwork
    """
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"cannot read adjacency file {path}: {exc}") from exc
    if list(frame.columns) != ADJACENCY_COLUMNS:
        raise DataFormatError(
            f"{path}: expected header {','.join(ADJACENCY_COLUMNS)}, "
            f"got {','.join(map(str, frame.columns))}"
        )
    if frame.isna().any().any():
        rows = frame.index[frame.isna().any(axis=1)].tolist()
        raise DataFormatError(f"{path}: missing values on data row(s) {[r + 1 for r in rows]}")
    src = frame["src"].to_numpy()
    dst = frame["dst"].to_numpy()
    if not (np.issubdtype(src.dtype, np.integer) and np.issubdtype(dst.dtype, np.integer)):
        raise DataFormatError(f"{path}: src/dst must be integer node indices")
    count = n_nodes if n_nodes is not None else int(max(src.max(), dst.max())) + 1
    edges = zip(src.tolist(), dst.tolist(), frame["weight"].astype(float).tolist())
    network = build_network(count, edges, symmetrize=symmetrize)
    logger.info(f"Loaded adjacency {path}: {network!r}")
    return network


def write_adjacency_csv(network: TrafficNetwork, path: Union[str, Path]) -> None:
    """Write every non-zero entry as a ``src,dst,weight`` row."""
    rows, cols = np.nonzero(network.adjacency)
    frame = pd.DataFrame(
        {"src": rows, "dst": cols, "weight": network.adjacency[rows, cols]},
        columns=ADJACENCY_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
