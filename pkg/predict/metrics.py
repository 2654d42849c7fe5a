"""
MAE/RMSE per forecast step, reported in denormalized units.
"""

from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Union

import numpy as np
import pandas as pd
import torch

from utils.errors import ShapeError

ArrayLike = Union[np.ndarray, torch.Tensor]

DEFAULT_STEPS = (1, 3, 6, 12)


@dataclass(frozen=True)
class MetricRow:
    step: int
    minutes: Optional[float]
    mae: float
    rmse: float


def _as_array(values: ArrayLike) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        return values.detach().cpu().numpy().astype(np.float64)
    return np.asarray(values, dtype=np.float64)


def metrics(y_hat: ArrayLike, y: ArrayLike, horizon_steps: Iterable[int],
            interval_minutes: Optional[float] = None) -> List[MetricRow]:
    """
    MAE and RMSE over B·N at each requested 1-based step.

    Args:
        y_hat: Forecasts, B×N×H
        y: Targets, B×N×H
        horizon_steps: Steps to report, each in 1..H
        interval_minutes: Sampling interval, used for the minutes column

    Raises:
        ShapeError: shapes differ or a step exceeds H
    """
    forecast, target = _as_array(y_hat), _as_array(y)
    if forecast.shape != target.shape:
        raise ShapeError(f"forecast {forecast.shape} and target {target.shape} differ")
    horizon = forecast.shape[-1]
    rows = []
    for step in horizon_steps:
        if not 1 <= step <= horizon:
            raise ShapeError(f"step {step} outside the forecast horizon 1..{horizon}")
        errors = (forecast[..., step - 1] - target[..., step - 1]).reshape(-1)
        mae = float(np.mean(np.abs(errors)))
        rmse = float(np.sqrt(np.mean(errors ** 2)))
        # power-mean inequality; slack covers rounding when all errors are equal
        if rmse < mae * (1.0 - 1e-12):
            raise ArithmeticError(f"RMSE {rmse} below MAE {mae} at step {step}")
        minutes = step * interval_minutes if interval_minutes is not None else None
        rows.append(MetricRow(step=step, minutes=minutes, mae=mae, rmse=rmse))
    return rows


def metrics_frame(rows: Iterable[MetricRow]) -> pd.DataFrame:
    """Rows as a ``step,minutes,mae,rmse`` frame."""
    return pd.DataFrame([asdict(row) for row in rows], columns=["step", "minutes", "mae", "rmse"])


def parse_steps(text: str) -> List[int]:
    """Parse ``"1,3,6,12"``."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ShapeError(f"invalid step list {text!r}") from exc
