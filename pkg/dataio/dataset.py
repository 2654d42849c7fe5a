"""
One city ready for the model: graph context, normalized series, model
inputs and its chronological split.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from config.settings import RunConfig
from dataio.features import model_inputs
from dataio.series import TrafficSeries, ZScore, zscore
from dataio.windows import SplitRanges, WindowSample, chrono_split, make_windows
from graphcore.context import GraphContext, build_context
from graphcore.network import TrafficNetwork
from utils.errors import ShapeError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class CityData:
    network: TrafficNetwork
    context: GraphContext
    series: TrafficSeries
    stats: ZScore
    inputs: np.ndarray
    targets: np.ndarray
    splits: SplitRanges
    history: int
    horizon: int

    def windows(self, part: str) -> List[WindowSample]:
        """Windows lying entirely inside the named split range."""
        span = self.splits.as_dict()[part]
        return make_windows(self.inputs, self.targets, self.history, self.horizon, span)

    def all_windows(self) -> List[WindowSample]:
        return make_windows(self.inputs, self.targets, self.history, self.horizon)


def prepare_city(
    network: TrafficNetwork,
    series: TrafficSeries,
    cfg: RunConfig,
    mode: str = "single",
    stats: Optional[ZScore] = None,
) -> CityData:
    """
    Normalize (training-range statistics unless ``stats`` is given), augment and split.

    Args:
        network: Sensor graph
        series: Raw readings
        cfg: Run configuration (window sizes, ratios, augmentation)
        mode: Split mode, see ``chrono_split``
        stats: Reuse stored normalization, e.g. from a model file
    """
    if series.n_nodes != network.n_nodes:
        raise ShapeError(f"series has {series.n_nodes} nodes, adjacency has {network.n_nodes}")
    splits = chrono_split(
        series.n_steps,
        mode,
        cfg.train_ratio,
        cfg.val_ratio,
        cfg.adapt_days,
        series.interval_minutes,
    )
    if stats is None:
        fit_range = splits.train if len(splits.train) else splits.adapt
        normalized, stats = zscore(series, fit_range)
    else:
        normalized = TrafficSeries(
            values=stats.normalize(series.values),
            interval_minutes=series.interval_minutes,
            timestamps=series.timestamps,
        )
    inputs = model_inputs(normalized.values, network, cfg.history, cfg.augment_features)
    context = build_context(network, cfg.k_spectral, cfg.keep_directed)
    logger.debug(f"Prepared city ({mode}): {series!r}, splits {splits}")
    return CityData(
        network=network,
        context=context,
        series=series,
        stats=stats,
        inputs=inputs,
        targets=normalized.values,
        splits=splits,
        history=cfg.history,
        horizon=cfg.horizon,
    )
