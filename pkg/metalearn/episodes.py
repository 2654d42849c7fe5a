"""
Few-shot episodes: disjoint support and query windows drawn from one scenario.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

from dataio.dataset import CityData
from dataio.windows import WindowSample
from graphcore.context import GraphContext
from utils.errors import InsufficientDataError
from utils.logger import get_logger
from utils.rng import XorShiftRNG

logger = get_logger(__name__)


@dataclass(frozen=True)
class Episode:
    """K support and Q query windows with no shared start index."""

    support: List[WindowSample]
    query: List[WindowSample]
    scenario_id: str
    context: Optional[GraphContext] = None

    def __post_init__(self):
        overlap = {s.start_index for s in self.support} & {q.start_index for q in self.query}
        if overlap:
            raise ValueError(f"support and query share start indices {sorted(overlap)}")


def sample_episode(
    windows: Sequence[WindowSample],
    support_size: int,
    query_size: int,
    rng: XorShiftRNG,
    scenario_id: str = "",
    context: Optional[GraphContext] = None,
) -> Episode:
    """
    Uniform draw without replacement over window start indices.

    Raises:
        InsufficientDataError: fewer than K + Q windows
    """
    needed = support_size + query_size
    if len(windows) < needed:
        raise InsufficientDataError(
            f"scenario {scenario_id or '?'} has {len(windows)} windows, "
            f"episode needs K + Q = {needed}"
        )
    picks = rng.sample_without_replacement(len(windows), needed)
    return Episode(
        support=[windows[i] for i in picks[:support_size]],
        query=[windows[i] for i in picks[support_size:]],
        scenario_id=scenario_id,
        context=context,
    )


class ScenarioPool:
    """Cities to draw meta-training episodes from; each city is one scenario."""

    def __init__(
        self,
        cities: Sequence[CityData],
        part: str = "train",
        names: Optional[Sequence[str]] = None,
    ):
        if not cities:
            raise InsufficientDataError("meta-training needs at least one city")
        self.cities = list(cities)
        if names is None:
            names = [f"city_{i:03d}" for i in range(len(cities))]
        self.names = list(names)
        self.windows = [city.windows(part) for city in self.cities]
        total = sum(map(len, self.windows))
        logger.info(f"Scenario pool: {len(self.cities)} cities, {total} windows")

    def __len__(self) -> int:
        return len(self.cities)

    def sample(self, support_size: int, query_size: int, rng: XorShiftRNG) -> Episode:
        """Pick a city uniformly, then an episode inside it."""
        index = rng.integer(0, len(self.cities))
        return sample_episode(self.windows[index], support_size, query_size, rng, self.names[index],
                              self.cities[index].context)
