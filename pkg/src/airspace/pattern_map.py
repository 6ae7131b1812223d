"""
Traffic pattern map: per-cell history of entry->exit traversals

Each cell keeps an append-only list of timestamped traversals together with
two incrementally maintained 6x6 count matrices, one cumulative and one over
the trailing discount window. Queries at non-decreasing times are O(1);
queries that look back in time are answered from the retained records.
"""

import bisect
import logging
from dataclasses import dataclass, field
from typing import (
    Dict,
    Iterable,
    Iterator,
    List,
    NamedTuple,
    Optional,
    TextIO,
    Tuple,
)

import numpy as np

from .exceptions import InvalidParameterError, TimeRegressionError
from .hexgeom import EDGE_INDICES, CellCoord

logger = logging.getLogger(__name__)


class TraversalRecord(NamedTuple):
    cell: CellCoord
    entry: int
    exit: int
    time: float

    def to_line(self) -> str:
        return f"{self.time!r} {self.cell.q} {self.cell.r} {self.entry} {self.exit}"

    @classmethod
    def from_line(cls, line: str) -> "TraversalRecord":
        time, q, r, entry, exit_ = line.split()
        return cls(CellCoord(int(q), int(r)), int(entry), int(exit_), float(time))


@dataclass
class _CellHistory:
    times: List[float] = field(default_factory=list)
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    cumulative: np.ndarray = field(default_factory=lambda: np.zeros((6, 6), int))
    # windowed == counts(window_start, window_end) as of window_now
    windowed: np.ndarray = field(default_factory=lambda: np.zeros((6, 6), int))
    window_start: int = 0
    window_end: int = 0
    window_now: float = float("-inf")

    def counts(self, lo: int, hi: int) -> np.ndarray:
        matrix = np.zeros((6, 6), dtype=int)
        for entry, exit_ in self.pairs[lo:hi]:
            matrix[entry - 1, exit_ - 1] += 1
        return matrix


class PatternMap:
    """Per-cell traversal counts with an optional hard-cutoff discount window"""

    def __init__(self, discount_window: Optional[float] = None):
        if discount_window is not None and not discount_window > 0:
            raise InvalidParameterError(
                f"discount_window must be positive or None, got {discount_window}"
            )
        self.discount_window = discount_window
        self._cells: Dict[CellCoord, _CellHistory] = {}
        self._log: List[TraversalRecord] = []
        self._times: List[float] = []
        self.version = 0

    def __len__(self) -> int:
        return len(self._log)

    def record_traversal(self, rec: TraversalRecord) -> None:
        """Append one traversal; time must not precede the cell's last record"""
        if rec.entry not in EDGE_INDICES or rec.exit not in EDGE_INDICES:
            raise InvalidParameterError(
                f"Edge pair ({rec.entry}, {rec.exit}) is not within 1..6"
            )
        if rec.time < 0:
            raise InvalidParameterError(f"Traversal time must be >= 0, got {rec.time}")

        cell = CellCoord(*rec.cell)
        history = self._cells.setdefault(cell, _CellHistory())
        if history.times and rec.time < history.times[-1]:
            raise TimeRegressionError(
                f"Record at t={rec.time} precedes last record t={history.times[-1]} "
                f"in cell {tuple(cell)}"
            )

        history.times.append(rec.time)
        history.pairs.append((rec.entry, rec.exit))
        history.cumulative[rec.entry - 1, rec.exit - 1] += 1
        self._log.append(TraversalRecord(cell, rec.entry, rec.exit, rec.time))
        if self._times and rec.time < self._times[-1]:
            bisect.insort(self._times, rec.time)
        else:
            self._times.append(rec.time)
        self.version += 1

    def windowed_matrix(self, cell: CellCoord, now: float) -> np.ndarray:
        """Counts of records with time in (now - window, now]"""
        if self.discount_window is None:
            return self.cumulative_matrix(cell, now)
        history = self._cells.get(cell)
        if history is None:
            return np.zeros((6, 6), dtype=int)

        if now >= history.window_now and history.times[-1] <= now:
            while history.window_end < len(history.times):
                entry, exit_ = history.pairs[history.window_end]
                history.windowed[entry - 1, exit_ - 1] += 1
                history.window_end += 1
            history.window_now = now
            while (
                history.window_start < history.window_end
                and history.times[history.window_start] <= now - self.discount_window
            ):
                entry, exit_ = history.pairs[history.window_start]
                history.windowed[entry - 1, exit_ - 1] -= 1
                history.window_start += 1
            return history.windowed.copy()

        hi = bisect.bisect_right(history.times, now)
        lo = bisect.bisect_right(history.times, now - self.discount_window)
        return history.counts(lo, hi)

    def window_state(self, now: float) -> Tuple[int, ...]:
        """Key that changes whenever some windowed matrix at `now` would"""
        hi = bisect.bisect_right(self._times, now)
        if self.discount_window is None:
            return (self.version, hi)
        lo = bisect.bisect_right(self._times, now - self.discount_window)
        return (self.version, lo, hi)

    def cumulative_matrix(self, cell: CellCoord, now: float) -> np.ndarray:
        """Counts of every record with time <= now"""
        history = self._cells.get(cell)
        if history is None:
            return np.zeros((6, 6), dtype=int)
        if history.times[-1] <= now:
            return history.cumulative.copy()
        return history.counts(0, bisect.bisect_right(history.times, now))

    def support_size(self, cell: CellCoord, now: float) -> int:
        """Number of distinct edge pairs used in the cell up to `now`"""
        return int(np.count_nonzero(self.cumulative_matrix(cell, now)))

    def cells(self) -> List[CellCoord]:
        return sorted(self._cells)

    def records(self) -> Iterator[TraversalRecord]:
        """Every record in insertion order"""
        return iter(self._log)

    def dump(self, fp: TextIO) -> None:
        for rec in self._log:
            fp.write(rec.to_line() + "\n")

    @classmethod
    def replay(
        cls, records: Iterable[TraversalRecord], discount_window: Optional[float] = None
    ) -> "PatternMap":
        pmap = cls(discount_window)
        for rec in records:
            pmap.record_traversal(rec)
        return pmap

    @classmethod
    def load(cls, fp: TextIO, discount_window: Optional[float] = None) -> "PatternMap":
        lines = (line for line in fp if line.strip())
        records = (TraversalRecord.from_line(line) for line in lines)
        return cls.replay(records, discount_window)


def record_traversal(pmap: PatternMap, rec: TraversalRecord) -> None:
    pmap.record_traversal(rec)


def windowed_matrix(pmap: PatternMap, cell: CellCoord, now: float) -> np.ndarray:
    return pmap.windowed_matrix(cell, now)


def cumulative_matrix(pmap: PatternMap, cell: CellCoord, now: float) -> np.ndarray:
    return pmap.cumulative_matrix(cell, now)
