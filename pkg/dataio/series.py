"""
Traffic series ingestion and z-score normalization.

Series CSV layout: header ``timestamp,node0,...,node{N-1}``, one row per
sampling instant, strictly increasing timestamps at a constant interval.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.settings import settings
from utils.errors import DataFormatError, InsufficientDataError
from utils.logger import get_logger

logger = get_logger(__name__)

TIMESTAMP_COLUMN = "timestamp"
SYNTH_EPOCH = pd.Timestamp("2024-01-01 00:00:00")


@dataclass(frozen=True)
class TrafficSeries:
    """T_total×N sensor readings with their sampling interval."""

    values: np.ndarray
    interval_minutes: float
    timestamps: Optional[pd.DatetimeIndex] = None

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    def steps_per_day(self) -> float:
        return 24 * 60 / self.interval_minutes

    def __repr__(self) -> str:
        return (
            f"TrafficSeries(steps={self.n_steps}, nodes={self.n_nodes}, "
            f"interval={self.interval_minutes}min)"
        )


@dataclass(frozen=True)
class ZScore:
    """Training-range statistics; every normalized quantity is (x − mean) / std."""

    mean: float
    std: float

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def _missing_cells(frame: pd.DataFrame) -> list:
    rows, cols = np.nonzero(frame.isna().to_numpy())
    return [f"row {r + 1} column {frame.columns[c]!r}" for r, c in zip(rows, cols)]


def load_series(path: Union[str, Path]) -> TrafficSeries:
    """
    Read a series CSV.

    The interval is inferred from the first two timestamps; a single data row
    falls back to ``settings.default_interval_minutes``.

    Raises:
        DataFormatError: unreadable file, bad header, missing or non-numeric
            cells, unparsable or non-monotone timestamps, irregular sampling
    """
    try:
        frame = pd.read_csv(
            path, encoding="utf-8", keep_default_na=True, float_precision="round_trip"
        )
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"cannot read series file {path}: {exc}") from exc
    if frame.columns.empty or frame.columns[0] != TIMESTAMP_COLUMN or len(frame.columns) < 2:
        raise DataFormatError(f"{path}: header must be '{TIMESTAMP_COLUMN},node0,...'")
    if frame.empty:
        raise DataFormatError(f"{path}: no data rows")

    missing = _missing_cells(frame)
    if missing:
        raise DataFormatError(f"{path}: missing values at {', '.join(missing)}")

    readings = frame.iloc[:, 1:].apply(pd.to_numeric, errors="coerce")
    malformed = _missing_cells(readings)
    if malformed:
        raise DataFormatError(f"{path}: non-numeric values at {', '.join(malformed)}")

    try:
        timestamps = pd.DatetimeIndex(pd.to_datetime(frame[TIMESTAMP_COLUMN]))
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"{path}: unparsable timestamps: {exc}") from exc
    if not timestamps.is_monotonic_increasing or timestamps.has_duplicates:
        raise DataFormatError(f"{path}: timestamps are not strictly increasing")

    if len(timestamps) > 1:
        deltas = np.asarray((timestamps[1:] - timestamps[:-1]).total_seconds(), dtype=np.float64)
        if np.any(deltas != deltas[0]):
            first_gap = int(np.flatnonzero(deltas != deltas[0])[0]) + 2
            raise DataFormatError(f"{path}: irregular sampling at data row {first_gap}")
        interval = float(deltas[0]) / 60.0
    else:
        interval = settings.default_interval_minutes

    values = readings.to_numpy(dtype=np.float64)
    series = TrafficSeries(values=values, interval_minutes=interval, timestamps=timestamps)
    logger.info(f"Loaded series {path}: {series!r}")
    return series


def write_series_csv(series: TrafficSeries, path: Union[str, Path]) -> None:
    """Write ``timestamp,node0,...``; series without timestamps start at a fixed epoch."""
    timestamps = series.timestamps
    if timestamps is None:
        step = pd.Timedelta(minutes=series.interval_minutes)
        timestamps = pd.date_range(SYNTH_EPOCH, periods=series.n_steps, freq=step)
    frame = pd.DataFrame(series.values, columns=[f"node{i}" for i in range(series.n_nodes)])
    frame.insert(0, TIMESTAMP_COLUMN, timestamps.strftime("%Y-%m-%d %H:%M:%S"))
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def zscore(
    series: TrafficSeries, train_range: Optional[range] = None
) -> Tuple[TrafficSeries, ZScore]:
    """
    Normalize with mean/std over ``train_range`` only (whole series when omitted).

    Returns:
        (normalized series, statistics)

    Raises:
        InsufficientDataError: empty training range
        DataFormatError: zero standard deviation
    """
    rows = range(series.n_steps) if train_range is None else train_range
    train = series.values[rows.start:rows.stop]
    if train.size == 0:
        raise InsufficientDataError("training range is empty")
    stats = ZScore(mean=float(train.mean()), std=float(train.std()))
    if not stats.std > 0:
        raise DataFormatError("series has zero standard deviation over the training range")
    logger.debug(f"Z-score statistics: mean={stats.mean:.6f} std={stats.std:.6f}")
    return replace(series, values=stats.normalize(series.values)), stats
