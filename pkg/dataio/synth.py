"""
Synthetic multi-city traffic generator.

Each city is a networkx topology and a speed series built from three parts:

* a daily rhythm ``amplitude·sin φ_k(t)`` whose phases follow Kuramoto
  dynamics dφ_k/dt = ω_k + coupling·Σ_j A_kj sin(φ_j − φ_k) (RK4, t in days,
  ω_k = 2π(1 + frequency_spread·z_k))
* congestion pulses injected at random nodes, spread by the heat kernel
  exp(−diffusivity·L·τ) and fading with exp(−τ / pulse_decay_hours)
  (τ in hours since injection), subtracted from the level
* Gaussian noise of standard deviation ``noise_sigma``

The coupling, diffusivity and mean frequency are written alongside the data so
learned κ and ν can be compared against them.
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config.settings import parse_key_values
from dataio.series import TrafficSeries, load_series, write_series_csv
from graphcore.network import (
    TrafficNetwork,
    from_adjacency,
    load_adjacency_csv,
    write_adjacency_csv,
)
from utils.errors import ConfigError
from utils.logger import get_logger
from utils.rng import XorShiftRNG
from validation.oracles import kuramoto_rk4

logger = get_logger(__name__)

SERIES_FILE = "series.csv"
ADJACENCY_FILE = "adjacency.csv"
TRUTH_FILE = "truth.csv"
MAX_GEOMETRIC_ATTEMPTS = 50


class SynthSpec(BaseModel):
    """Generator parameters, loadable from a flat ``key = value`` file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_nodes: int = Field(default=8, ge=2)
    topology: Literal["ring", "grid", "random-geometric"] = "ring"
    days: float = Field(default=2.0, gt=0)
    interval_minutes: float = Field(default=5.0, gt=0)
    base_level: float = Field(default=60.0, description="Free-flow speed")
    amplitude: float = Field(default=10.0, ge=0, description="Daily rhythm amplitude")
    frequency_spread: float = Field(default=0.05, ge=0)
    coupling: float = Field(default=0.5, ge=0, description="Kuramoto coupling of the daily phases")
    diffusivity: float = Field(
        default=0.1, ge=0, description="Heat-kernel rate of congestion pulses, per hour"
    )
    pulses_per_day: float = Field(default=4.0, ge=0)
    pulse_height: float = Field(default=8.0, ge=0)
    pulse_decay_hours: float = Field(default=1.0, gt=0)
    noise_sigma: float = Field(default=0.5, ge=0)
    radius: float = Field(
        default=0.45, gt=0, description="Connection radius for random-geometric graphs"
    )
    seed: Optional[int] = None

    @property
    def n_steps(self) -> int:
        return int(round(self.days * 24 * 60 / self.interval_minutes))


def load_synth_spec(
    path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None
) -> SynthSpec:
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(parse_key_values(Path(path).read_text(encoding="utf-8"), str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return SynthSpec(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"invalid synthetic spec: {first['loc']}: {first['msg']}") from exc


def _grid_shape(n_nodes: int) -> Tuple[int, int]:
    rows = max(d for d in range(1, math.isqrt(n_nodes) + 1) if n_nodes % d == 0)
    return rows, n_nodes // rows


def build_topology(spec: SynthSpec, rng: XorShiftRNG) -> nx.Graph:
    """Connected undirected graph on nodes 0..n−1 with a ``weight`` on every edge."""
    if spec.topology == "ring":
        graph = nx.cycle_graph(spec.n_nodes)
        nx.set_edge_attributes(graph, 1.0, "weight")
        return graph
    if spec.topology == "grid":
        grid = nx.grid_2d_graph(*_grid_shape(spec.n_nodes))
        graph = nx.convert_node_labels_to_integers(grid, ordering="sorted")
        nx.set_edge_attributes(graph, 1.0, "weight")
        return graph
    radius = spec.radius
    for _ in range(MAX_GEOMETRIC_ATTEMPTS):
        graph = nx.random_geometric_graph(spec.n_nodes, radius, seed=rng.next_u64() % 2**32)
        if nx.is_connected(graph):
            positions = nx.get_node_attributes(graph, "pos")
            for i, j in graph.edges:
                distance = math.dist(positions[i], positions[j])
                graph.edges[i, j]["weight"] = math.exp(-((distance / radius) ** 2))
            return graph
        radius *= 1.1
    raise ConfigError(
        f"no connected random-geometric graph after {MAX_GEOMETRIC_ATTEMPTS} attempts"
    )


def congestion_pulses(adjacency: np.ndarray, spec: SynthSpec, rng: XorShiftRNG) -> np.ndarray:
    """T×N congestion field, already scaled by ``pulse_height``."""
    steps, n = spec.n_steps, adjacency.shape[0]
    field = np.zeros((steps, n))
    count = int(round(spec.pulses_per_day * spec.days))
    if count == 0 or spec.pulse_height == 0:
        return field
    laplacian = np.diag(adjacency.sum(axis=1)) - adjacency
    eigvals, eigvecs = np.linalg.eigh(laplacian)
    hours_per_step = spec.interval_minutes / 60.0
    for _ in range(count):
        start, node = rng.integer(0, steps), rng.integer(0, n)
        tau = np.arange(steps - start) * hours_per_step
        modes = np.exp(-spec.diffusivity * np.outer(tau, eigvals)) * eigvecs[node][None, :]
        spread = modes @ eigvecs.T
        field[start:] += spec.pulse_height * spread * np.exp(-tau / spec.pulse_decay_hours)[:, None]
    return field


def synth_generate(spec: SynthSpec, rng: XorShiftRNG) -> Tuple[TrafficNetwork, TrafficSeries]:
    """Draw one city; identical spec and seed give identical output."""
    graph = build_topology(spec, rng.spawn(1))
    adjacency = nx.to_numpy_array(graph, nodelist=range(spec.n_nodes), weight="weight")
    network = from_adjacency(adjacency)

    phase_rng = rng.spawn(2)
    steps, dt_days = spec.n_steps, spec.interval_minutes / (24 * 60)
    omega = 2.0 * math.pi * (1.0 + spec.frequency_spread * phase_rng.normal((spec.n_nodes,)))
    initial = phase_rng.uniform(0.0, 2.0 * math.pi, (spec.n_nodes,))
    phases = kuramoto_rk4(adjacency, initial, omega, spec.coupling, dt_days, steps - 1)

    values = spec.base_level + spec.amplitude * np.sin(phases)
    values = values - congestion_pulses(adjacency, spec, rng.spawn(3))
    if spec.noise_sigma > 0:
        values = values + rng.spawn(4).normal((steps, spec.n_nodes), scale=spec.noise_sigma)

    series = TrafficSeries(values=values, interval_minutes=spec.interval_minutes)
    logger.info(f"Generated {spec.topology} city: {network!r}, {series!r}")
    return network, series


def ground_truth(spec: SynthSpec) -> pd.DataFrame:
    """``name,value`` rows describing the generator dynamics."""
    return pd.DataFrame(
        {
            "name": ["coupling", "diffusivity", "mean_frequency", "pulse_decay_hours"],
            "value": [spec.coupling, spec.diffusivity, 2.0 * math.pi, spec.pulse_decay_hours],
        }
    )


def write_city(directory: Union[str, Path], network: TrafficNetwork, series: TrafficSeries,
               spec: Optional[SynthSpec] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_series_csv(series, directory / SERIES_FILE)
    write_adjacency_csv(network, directory / ADJACENCY_FILE)
    if spec is not None:
        ground_truth(spec).to_csv(
            directory / TRUTH_FILE, index=False, lineterminator="\n", float_format="%.17g"
        )
    return directory


def load_city(directory: Union[str, Path]) -> Tuple[TrafficNetwork, TrafficSeries]:
    directory = Path(directory)
    series = load_series(directory / SERIES_FILE)
    network = load_adjacency_csv(directory / ADJACENCY_FILE, n_nodes=series.n_nodes)
    return network, series


def synth_cities(
    spec: SynthSpec, count: int, out_dir: Union[str, Path], rng: XorShiftRNG
) -> List[Path]:
    """Write ``city_000``, ``city_001``, ... each drawn from its own stream."""
    paths = []
    for index in range(count):
        network, series = synth_generate(spec, rng.spawn(100 + index))
        paths.append(write_city(Path(out_dir) / f"city_{index:03d}", network, series, spec))
    logger.info(f"Wrote {count} synthetic cities under {out_dir}")
    return paths


def city_directories(root: Union[str, Path]) -> List[Path]:
    """Sorted ``city_*`` subdirectories holding both CSV files."""
    found = sorted(
        p
        for p in Path(root).glob("city_*")
        if (p / SERIES_FILE).exists() and (p / ADJACENCY_FILE).exists()
    )
    if not found:
        raise ConfigError(
            f"no city_* directories with {SERIES_FILE} and {ADJACENCY_FILE} under {root}"
        )
    return found
