"""
Hexagonal tiling of the airspace

Cells are pointy-top hexagons addressed by axial coordinates (q, r) on a flat
Euclidean plane with the y axis pointing up. The cell edge length equals the
circumradius. Edges are numbered 1 to 6 clockwise starting from the
upper-right edge:

    1 upper-right, 2 right, 3 lower-right, 4 lower-left, 5 left, 6 upper-left

Edge k of cell (q, r) is the same physical edge as edge opposite(k) of the
neighbor across it.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple

import numpy as np

from .exceptions import InvalidParameterError, OutOfGridError

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
EDGE_INDICES: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)

# Axial step to the neighbor across each edge.
EDGE_DIRECTIONS: Dict[int, Tuple[int, int]] = {
    1: (0, 1),
    2: (1, 0),
    3: (1, -1),
    4: (0, -1),
    5: (-1, 0),
    6: (-1, 1),
}

Point = Tuple[float, float]


class CellCoord(NamedTuple):
    """Axial coordinate of a hexagonal cell"""

    q: int
    r: int


class EdgeRef(NamedTuple):
    """One numbered edge of one cell; orders by (q, r, edge)"""

    cell: CellCoord
    edge: int


def opposite_edge(edge: int) -> int:
    """Index of the same physical edge seen from the neighboring cell"""
    return (edge + 2) % 6 + 1


def edge_normal_angle(edge: int) -> float:
    """Outward normal of an edge in radians, counter-clockwise from +x"""
    return math.radians(60.0 - 60.0 * (edge - 1))


def hex_distance(a: CellCoord, b: CellCoord) -> int:
    """Number of cell steps between two cells"""
    dq = a.q - b.q
    dr = a.r - b.r
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def neighbor(cell: CellCoord, edge: int) -> CellCoord:
    """Cell across the given edge (may lie outside any grid)"""
    dq, dr = EDGE_DIRECTIONS[edge]
    return CellCoord(cell.q + dq, cell.r + dr)


def _check_edge(edge: int) -> None:
    if edge not in EDGE_DIRECTIONS:
        raise InvalidParameterError(f"Edge index must be in 1..6, got {edge}")


@dataclass(frozen=True)
class GridSpec:
    """Hex-of-hexes grid: every cell within `radius` steps of the origin"""

    radius: int
    cell_edge_length: float = 2.5

    @cached_property
    def cells(self) -> Tuple[CellCoord, ...]:
        n = self.radius
        found = [
            CellCoord(q, r)
            for q in range(-n, n + 1)
            for r in range(max(-n, -q - n), min(n, -q + n) + 1)
        ]
        return tuple(sorted(found))

    @cached_property
    def cell_set(self) -> FrozenSet[CellCoord]:
        return frozenset(self.cells)

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    @property
    def apothem(self) -> float:
        """Distance from a cell center to each edge midpoint"""
        return self.cell_edge_length * SQRT3 / 2.0

    @cached_property
    def grid_diameter(self) -> float:
        """Diameter of the smallest origin-centred circle holding every cell"""
        centers = np.array([self.cell_center(c) for c in self.cells])
        angles = np.radians(90.0 - 60.0 * np.arange(6))
        corners = self.cell_edge_length * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1
        )
        vertices = centers[:, None, :] + corners[None, :, :]
        return float(2.0 * np.linalg.norm(vertices, axis=2).max())

    @property
    def grid_area(self) -> float:
        """Area of the circumscribing circle, in square miles"""
        return math.pi * (self.grid_diameter / 2.0) ** 2

    @cached_property
    def edges(self) -> Tuple[EdgeRef, ...]:
        return tuple(EdgeRef(c, e) for c in self.cells for e in EDGE_INDICES)

    @cached_property
    def partners(self) -> Dict[EdgeRef, Optional[EdgeRef]]:
        table: Dict[EdgeRef, Optional[EdgeRef]] = {}
        for ref in self.edges:
            other = neighbor(ref.cell, ref.edge)
            table[ref] = (
                EdgeRef(other, opposite_edge(ref.edge))
                if other in self.cell_set
                else None
            )
        return table

    @cached_property
    def boundary(self) -> Tuple[EdgeRef, ...]:
        outward = [ref for ref, partner in self.partners.items() if partner is None]

        def clockwise_from_north(ref: EdgeRef) -> float:
            x, y = self.midpoint(ref)
            return round((90.0 - math.degrees(math.atan2(y, x))) % 360.0, 9)

        return tuple(sorted(outward, key=clockwise_from_north))

    @cached_property
    def boundary_position(self) -> Dict[EdgeRef, int]:
        return {ref: i for i, ref in enumerate(self.boundary)}

    @cached_property
    def base_unimpeded(self) -> np.ndarray:
        offsets = np.array(
            [
                (
                    self.apothem * math.cos(edge_normal_angle(e)),
                    self.apothem * math.sin(edge_normal_angle(e)),
                )
                for e in EDGE_INDICES
            ]
        )
        u = np.linalg.norm(offsets[:, None, :] - offsets[None, :, :], axis=2)
        np.fill_diagonal(u, 4.0 * self.cell_edge_length)
        u.setflags(write=False)
        return u

    def contains(self, cell: CellCoord) -> bool:
        return cell in self.cell_set

    def require(self, cell: CellCoord) -> None:
        if cell not in self.cell_set:
            raise OutOfGridError(
                f"Cell {tuple(cell)} is outside a radius-{self.radius} grid"
            )

    def cell_center(self, cell: CellCoord) -> Point:
        length = self.cell_edge_length
        return (length * SQRT3 * (cell.q + cell.r / 2.0), length * 1.5 * cell.r)

    def midpoint(self, ref: EdgeRef) -> Point:
        # Both sides of a physical edge resolve through the smaller EdgeRef so
        # coincident references produce bit-identical points.
        partner = self.partners.get(ref)
        if partner is not None and partner < ref:
            ref = partner
        cx, cy = self.cell_center(ref.cell)
        angle = edge_normal_angle(ref.edge)
        return (
            cx + self.apothem * math.cos(angle),
            cy + self.apothem * math.sin(angle),
        )


def build_grid(radius: int, cell_edge_length: float = 2.5) -> GridSpec:
    """Build the hex-of-hexes grid of the given radius"""
    if not isinstance(radius, (int, np.integer)) or radius < 1:
        raise InvalidParameterError(
            f"Grid radius must be an integer >= 1, got {radius}"
        )
    if not cell_edge_length > 0:
        raise InvalidParameterError(
            f"Cell edge length must be positive, got {cell_edge_length}"
        )
    grid = GridSpec(int(radius), float(cell_edge_length))
    logger.debug(
        f"Built grid radius={grid.radius} cells={grid.cell_count} "
        f"diameter={grid.grid_diameter:.3f} mi"
    )
    return grid


def coincident_edge(grid: GridSpec, e: EdgeRef) -> Optional[EdgeRef]:
    """Same physical edge seen from the neighboring cell, or None on the boundary"""
    grid.require(e.cell)
    _check_edge(e.edge)
    return grid.partners[EdgeRef(CellCoord(*e.cell), e.edge)]


def edge_midpoint(grid: GridSpec, e: EdgeRef) -> Point:
    """Cartesian midpoint of an edge, in miles"""
    grid.require(e.cell)
    _check_edge(e.edge)
    return grid.midpoint(EdgeRef(CellCoord(*e.cell), e.edge))


def unimpeded_cost_matrix(grid: GridSpec, cell: CellCoord) -> np.ndarray:
    """6x6 midpoint distances; the diagonal (U-turn) is four edge lengths"""
    grid.require(cell)
    return np.array(grid.base_unimpeded, dtype=float)


def boundary_edges(grid: GridSpec) -> List[EdgeRef]:
    """Outward-facing edges in clockwise perimeter order"""
    return list(grid.boundary)


def perimeter_adjacent(grid: GridSpec, a: EdgeRef, b: EdgeRef) -> bool:
    """True when two boundary edges share a vertex along the perimeter"""
    position = grid.boundary_position
    if a not in position or b not in position:
        raise OutOfGridError(f"{a} and {b} must both be boundary edges")
    gap = abs(position[a] - position[b])
    total = len(position)
    return gap == 1 or gap == total - 1
