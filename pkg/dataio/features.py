"""
Physics-inspired feature channels appended to the normalized series.

All four channels at time t use readings up to t only:

* degree: Σ_j A_ij, static, z-scored across nodes
* flow variance: variance over the trailing L steps, z-scored across nodes
* neighbour influence: (A·x_t)_i / degree_i
* temporal gradient: x_t − x_{t−1}, zero at t = 0
"""

import numpy as np
import pandas as pd

from graphcore.network import TrafficNetwork
from utils.errors import ShapeError

FEATURE_NAMES = ("degree", "flow_variance", "neighbour_influence", "temporal_gradient")


def _zscore_nodes(values: np.ndarray) -> np.ndarray:
    """Z-score along the last (node) axis; rows with no spread become zero."""
    centred = values - values.mean(axis=-1, keepdims=True)
    spread = values.std(axis=-1, keepdims=True)
    return np.divide(centred, spread, out=np.zeros_like(centred), where=spread > 1e-12)


def augment_features(values: np.ndarray, net: TrafficNetwork, window: int = 12) -> np.ndarray:
    """
    Args:
        values: T×N normalized series
        net: Sensor graph with N nodes
        window: Trailing length for the rolling variance

    Returns:
        T×N×4 array ordered as FEATURE_NAMES
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != net.n_nodes:
        raise ShapeError(
            f"series of shape {values.shape} does not match a {net.n_nodes}-node network"
        )
    steps = values.shape[0]
    degree = net.adjacency.sum(axis=1)

    degree_channel = np.broadcast_to(_zscore_nodes(degree), values.shape)
    variance = pd.DataFrame(values).rolling(window=window, min_periods=1).var(ddof=0).to_numpy()
    variance_channel = _zscore_nodes(variance)
    weighted = values @ net.adjacency.T
    influence = np.divide(weighted, degree, out=np.zeros_like(weighted), where=degree > 0)
    gradient = np.zeros_like(values)
    if steps > 1:
        gradient[1:] = np.diff(values, axis=0)

    return np.stack([degree_channel, variance_channel, influence, gradient], axis=-1)


def model_inputs(
    values: np.ndarray, net: TrafficNetwork, window: int = 12, augment: bool = True
) -> np.ndarray:
    """Raw channel followed by the augmented ones: T×N×5, or T×N×1 without augmentation."""
    raw = np.asarray(values, dtype=np.float64)[..., None]
    if not augment:
        return raw
    return np.concatenate([raw, augment_features(values, net, window)], axis=-1)
