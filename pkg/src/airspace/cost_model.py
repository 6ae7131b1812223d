"""
Cell transit costs

Total cost of crossing a cell from edge i to edge j is the unimpeded cost
u[i][j] plus a traffic cost 1 - k_t * t[i][j] / sum(T). Entries may be
negative at high gain; the planner applies its own non-negative floor.
"""

import numpy as np

DEFAULT_KT_MAX = 6.024


def traffic_cost(T: np.ndarray, k_t: float, scale: float = 1.0) -> np.ndarray:
    """Traffic cost matrix; every entry is 1 for a cell with no traffic

    Accepts one 6x6 matrix or a stack of them along leading axes.
    """
    counts = np.asarray(T, dtype=float)
    total = counts.sum(axis=(-2, -1), keepdims=True)
    busy = total > 0
    return np.where(busy, 1.0 - scale * k_t * counts / np.where(busy, total, 1.0), 1.0)


def total_cost(
    U: np.ndarray, T: np.ndarray, k_t: float, scale: float = 1.0
) -> np.ndarray:
    """Unimpeded plus traffic cost, entrywise"""
    return np.asarray(U, dtype=float) + traffic_cost(T, k_t, scale)
