"""
Shannon entropy of traffic patterns

Cell entropy treats the 36 entry->exit counts of a cell as a distribution;
airspace entropy sums it over every cell of the cumulative map.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import entropy as shannon

from .hexgeom import GridSpec
from .pattern_map import PatternMap


@dataclass(frozen=True)
class EntropySample:
    time: float
    total_entropy: float
    support_size: int


def cell_entropy(T: np.ndarray, base: Optional[float] = None) -> float:
    """Entropy of one cell's traversal distribution; 0 for an empty cell"""
    counts = np.asarray(T, dtype=float).ravel()
    if counts.sum() <= 0:
        return 0.0
    return float(shannon(counts, base=base))


def airspace_entropy(
    pmap: PatternMap, grid: GridSpec, now: float, base: Optional[float] = None
) -> float:
    """Sum of cell entropies over the cumulative map at `now`"""
    cells = [c for c in pmap.cells() if grid.contains(c)]
    if not cells:
        return 0.0
    stacked = np.stack([pmap.cumulative_matrix(c, now).ravel() for c in cells])
    stacked = stacked[stacked.sum(axis=1) > 0].astype(float)
    if stacked.size == 0:
        return 0.0
    return float(shannon(stacked, base=base, axis=1).sum())


def support_size(pmap: PatternMap, grid: GridSpec, now: float) -> int:
    """Distinct edge pairs used so far, summed over cells"""
    return sum(pmap.support_size(c, now) for c in pmap.cells() if grid.contains(c))


def sample(
    pmap: PatternMap, grid: GridSpec, now: float, base: Optional[float] = None
) -> EntropySample:
    return EntropySample(
        time=now,
        total_entropy=airspace_entropy(pmap, grid, now, base),
        support_size=support_size(pmap, grid, now),
    )
