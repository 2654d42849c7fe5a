"""
Sliding windows and chronological splits.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from utils.errors import InsufficientDataError, ShapeError
from utils.logger import get_logger

logger = get_logger(__name__)

SPLIT_MODES = ("single", "source", "target")


@dataclass(frozen=True)
class WindowSample:
    """x: L×N×C model input; y: H×N target; both normalized."""

    x: np.ndarray
    y: np.ndarray
    start_index: int


@dataclass(frozen=True)
class SplitRanges:
    """Disjoint, chronological, exhaustive step ranges."""

    train: range
    val: range
    adapt: range
    test: range

    def as_dict(self):
        return {"train": self.train, "val": self.val, "adapt": self.adapt, "test": self.test}


def window_count(n_steps: int, history: int, horizon: int) -> int:
    return n_steps - history - horizon + 1


def make_windows(inputs: np.ndarray, targets: np.ndarray, history: int, horizon: int,
                 span: Optional[range] = None) -> List[WindowSample]:
    """
    Window i covers inputs[i : i+L] and targets[i+L : i+L+H].

    Args:
        inputs: T×N×C model inputs
        targets: T×N normalized readings
        history: L
        horizon: H
        span: Restrict to windows lying entirely inside this step range

    Raises:
        InsufficientDataError: fewer than L + H steps available
    """
    if inputs.shape[:2] != targets.shape:
        raise ShapeError(f"inputs {inputs.shape[:2]} and targets {targets.shape} disagree")
    span = range(targets.shape[0]) if span is None else span
    count = window_count(len(span), history, horizon)
    if count < 1:
        raise InsufficientDataError(
            f"{len(span)} steps cannot hold one window of L={history} + H={horizon}"
        )
    samples = []
    for offset in range(count):
        start = span.start + offset
        samples.append(
            WindowSample(
                x=inputs[start:start + history],
                y=targets[start + history:start + history + horizon],
                start_index=start,
            )
        )
    return samples


def stack_windows(samples: Sequence[WindowSample]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Batch tensors: x B×L×N×C and y B×N×H."""
    if not samples:
        raise InsufficientDataError("no windows to batch")
    x = torch.tensor(np.stack([s.x for s in samples]), dtype=torch.float64)
    y = torch.tensor(np.stack([s.y.T for s in samples]), dtype=torch.float64)
    return x, y


def adaptation_steps(adapt_days: float, interval_minutes: float) -> int:
    """Steps in ``adapt_days`` days of data (3 days at 5 min → 864)."""
    return int(round(adapt_days * 24 * 60 / interval_minutes))


def chrono_split(
    n_steps: int,
    mode: str = "single",
    train_ratio: float = 0.7,
    val_ratio: float = 0.1,
    adapt_days: float = 3.0,
    interval_minutes: float = 5.0,
) -> SplitRanges:
    """
    Split ``n_steps`` into chronological ranges.

    single: train/val/test by ratio (70/10/20 by default); no adaptation range.
    source: the whole city is training data, its last ``val_ratio`` held out.
    target: the first ``adapt_days`` days adapt, the remainder is the test range.

    Raises:
        InsufficientDataError: the adaptation window does not leave test data
    """
    empty = range(0, 0)
    if mode == "single":
        train_end = int(round(n_steps * train_ratio))
        val_end = train_end + int(round(n_steps * val_ratio))
        return SplitRanges(train=range(0, train_end), val=range(train_end, val_end), adapt=empty,
                           test=range(val_end, n_steps))
    if mode == "source":
        train_end = n_steps - int(round(n_steps * val_ratio))
        return SplitRanges(
            train=range(0, train_end), val=range(train_end, n_steps), adapt=empty, test=empty
        )
    if mode == "target":
        adapt_end = adaptation_steps(adapt_days, interval_minutes)
        if adapt_end >= n_steps:
            raise InsufficientDataError(
                f"{adapt_days}-day adaptation window needs {adapt_end} steps, target has {n_steps}"
            )
        return SplitRanges(
            train=empty, val=empty, adapt=range(0, adapt_end), test=range(adapt_end, n_steps)
        )
    raise ValueError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")
