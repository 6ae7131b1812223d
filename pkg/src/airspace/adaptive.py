"""
Density-driven traffic-following gain

An ownship counts the other airborne aircraft within its sensing range R_s,
divides by the range area (never more than the grid area) and maps the
resulting density through an increasing logistic curve:

    k_t = L / (1 + exp(-(rho - x0) / s))

With the defaults, x0 / s = 15.193 and L = 6.024.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from .exceptions import InvalidParameterError
from .hexgeom import GridSpec


@dataclass(frozen=True)
class SigmoidParams:
    ceiling: float = 6.024
    midpoint_density: float = 0.0075965
    slope_scale: float = 0.0005

    def __post_init__(self) -> None:
        if not self.ceiling > 0:
            raise InvalidParameterError(
                f"Sigmoid ceiling must be > 0, got {self.ceiling}"
            )
        if not self.slope_scale > 0:
            raise InvalidParameterError(
                f"Sigmoid slope scale must be > 0, got {self.slope_scale}"
            )
        if self.midpoint_density < 0:
            raise InvalidParameterError(
                f"Sigmoid midpoint must be >= 0, got {self.midpoint_density}"
            )


def local_density(
    own_pos: Tuple[float, float],
    others: Sequence[Tuple[float, float]],
    R_s: float,
    grid: GridSpec,
) -> float:
    """Aircraft per square mile within R_s of own_pos (boundary inclusive)"""
    if not R_s > 0:
        raise InvalidParameterError(f"Sensor range must be > 0, got {R_s}")
    if len(others) == 0:
        return 0.0
    offsets = np.asarray(others, dtype=float) - np.asarray(own_pos, dtype=float)
    count = int(np.count_nonzero(np.hypot(offsets[:, 0], offsets[:, 1]) <= R_s))
    area = min(math.pi * R_s**2, grid.grid_area)
    return count / area


def kt_from_density(rho: float, p: SigmoidParams = SigmoidParams()) -> float:
    """Traffic-following gain for a sensed density"""
    if rho < 0:
        raise InvalidParameterError(f"Density must be >= 0, got {rho}")
    return float(p.ceiling * expit((rho - p.midpoint_density) / p.slope_scale))
