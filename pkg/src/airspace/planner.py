"""
Least-cost planning over the graph of cell edges

Nodes are EdgeRefs. Within a cell, the arc from edge i to edge j carries the
clamped total cost C[i][j] of entering through i and leaving through j.
Coincident edges of neighboring cells are joined by zero-weight arcs in both
directions. U-turns are not arcs: they are offered only as the first move of
a plan that starts inside a cell (see `least_cost_path(within=...)`).

The arc topology depends only on the grid and is built once per grid; a
graph carries nothing but the 6x6 weight rows of each cell.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import (
    Dict,
    FrozenSet,
    Hashable,
    Iterable,
    List,
    Mapping,
    Optional,
    Tuple,
)

import numpy as np

from .cost_model import total_cost
from .exceptions import InvalidParameterError, UnreachableGoalError
from .hexgeom import EDGE_INDICES, CellCoord, EdgeRef, GridSpec
from .pattern_map import PatternMap

logger = logging.getLogger(__name__)

Arc = Tuple[EdgeRef, EdgeRef, float]
CellCosts = Dict[CellCoord, List[List[float]]]


@dataclass(frozen=True)
class PlannedPath:
    nodes: Tuple[EdgeRef, ...]
    total_cost: float

    @property
    def start(self) -> EdgeRef:
        return self.nodes[0]

    @property
    def goal(self) -> EdgeRef:
        return self.nodes[-1]

    def __len__(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=8)
def within_cell_arcs(grid: GridSpec) -> Dict[EdgeRef, Tuple[Tuple[EdgeRef, int], ...]]:
    """For every node, the other edges of its cell and their column in the cost row"""
    return {
        node: tuple(
            (EdgeRef(node.cell, j), j - 1) for j in EDGE_INDICES if j != node.edge
        )
        for node in grid.edges
    }


class EdgeGraph:
    """Weighted arcs between cell edges for one gain and one instant"""

    def __init__(self, grid: GridSpec, cell_costs: CellCosts):
        self.grid = grid
        self.cell_costs = cell_costs
        self._within = within_cell_arcs(grid)

    def out_arcs(self, node: EdgeRef) -> List[Tuple[EdgeRef, float]]:
        """Arcs leaving `node`: the rest of its cell, then the coincident edge"""
        row = self.cell_costs[node.cell][node.edge - 1]
        arcs = [(v, row[col]) for v, col in self._within[node]]
        partner = self.grid.partners[node]
        if partner is not None:
            arcs.append((partner, 0.0))
        return arcs

    @cached_property
    def adjacency(self) -> Dict[EdgeRef, List[Tuple[EdgeRef, float]]]:
        return {node: self.out_arcs(node) for node in self.grid.edges}

    @property
    def nodes(self) -> Tuple[EdgeRef, ...]:
        return self.grid.edges

    def arcs(self) -> List[Arc]:
        """Every directed arc"""
        return [(u, v, w) for u, out in self.adjacency.items() for v, w in out]

    def zero_arcs(self) -> List[Tuple[EdgeRef, EdgeRef]]:
        """Coincident-edge arcs, one per interior physical edge"""
        return [
            (node, partner)
            for node, partner in self.grid.partners.items()
            if partner is not None and node < partner
        ]

    def uturn_cost(self, node: EdgeRef) -> float:
        return self.cell_costs[node.cell][node.edge - 1][node.edge - 1]


class GraphBuilder:
    """Edge graphs over one pattern map, reused while its windowed traffic holds

    Cells without traffic in the window keep precomputed rows; the rest are
    recomputed as one stacked array per gain. Graphs are cached per gain until
    the pattern map's window state changes.
    """

    def __init__(
        self,
        grid: GridSpec,
        pmap: PatternMap,
        unimpeded: Optional[Mapping[CellCoord, np.ndarray]] = None,
        traffic_scale: float = 1.0,
        floor: float = 0.0,
    ):
        if floor < 0:
            raise InvalidParameterError(f"Arc weight floor must be >= 0, got {floor}")
        self.grid = grid
        self.pmap = pmap
        self.traffic_scale = traffic_scale
        self.floor = floor
        self._unimpeded: Dict[CellCoord, np.ndarray] = {}
        for cell in grid.cells:
            U = grid.base_unimpeded
            if unimpeded is not None and cell in unimpeded:
                U = unimpeded[cell]
            self._unimpeded[cell] = np.asarray(U, dtype=float)
        self._idle: CellCosts = {
            cell: np.maximum(U + 1.0, floor).tolist()
            for cell, U in self._unimpeded.items()
        }
        self._state: Optional[Hashable] = None
        self._busy: List[CellCoord] = []
        self._graphs: Dict[float, EdgeGraph] = {}

    def graph(self, k_t: float, now: float) -> EdgeGraph:
        state = self.pmap.window_state(now)
        if state != self._state:
            self._load_traffic(now)
            self._state = state
            self._graphs = {}
        g = self._graphs.get(k_t)
        if g is None:
            g = self._graphs[k_t] = EdgeGraph(self.grid, self._cell_costs(k_t))
        return g

    def _load_traffic(self, now: float) -> None:
        busy, U, T = [], [], []
        for cell in self.pmap.cells():
            if not self.grid.contains(cell):
                continue
            counts = np.asarray(self.pmap.windowed_matrix(cell, now), dtype=float)
            if counts.sum() > 0:
                busy.append(cell)
                U.append(self._unimpeded[cell])
                T.append(counts)
        self._busy = busy
        if busy:
            self._U = np.stack(U)
            self._T = np.stack(T)

    def _cell_costs(self, k_t: float) -> CellCosts:
        costs = dict(self._idle)
        if not self._busy:
            return costs
        C = total_cost(self._U, self._T, k_t, self.traffic_scale)
        weights = np.maximum(C, self.floor)
        assert (weights >= 0).all(), "negative arc weight"
        costs.update(zip(self._busy, weights.tolist()))
        return costs


def build_edge_graph(
    grid: GridSpec,
    pmap: PatternMap,
    k_t: float,
    now: float,
    unimpeded: Optional[Mapping[CellCoord, np.ndarray]] = None,
    traffic_scale: float = 1.0,
    floor: float = 0.0,
) -> EdgeGraph:
    """Graph with arc weights max(floor, C) from the windowed traffic at `now`"""
    builder = GraphBuilder(grid, pmap, unimpeded, traffic_scale, floor)
    return builder.graph(k_t, now)


def least_cost_path(
    g: EdgeGraph,
    start: EdgeRef,
    goal: EdgeRef,
    within: Optional[CellCoord] = None,
    allow_uturn: bool = True,
    exclude_cells: Iterable[CellCoord] = (),
) -> PlannedPath:
    """Dijkstra from `start` to `goal` with deterministic tie-breaking

    With `within` set, `start` is the edge through which the aircraft entered
    that cell: the first move is a transit of the cell (or, when allowed, a
    U-turn back out through `start` priced at C[start][start]) instead of the
    free hop to the coincident edge. Cells in `exclude_cells` are never entered.

    Paths are simple: no node is visited twice, so a plan never passes back
    through `start`. Without a U-turn first move, a plan that starts inside a
    cell therefore never re-enters that cell through its entry edge.
    """
    for node in (start, goal):
        g.grid.require(node.cell)
    start = EdgeRef(CellCoord(*start.cell), start.edge)
    goal = EdgeRef(CellCoord(*goal.cell), goal.edge)
    if start == goal:
        return PlannedPath((start,), 0.0)

    excluded: FrozenSet[CellCoord] = frozenset(CellCoord(*c) for c in exclude_cells)
    if goal.cell in excluded:
        raise UnreachableGoalError(f"Goal {goal} lies in an excluded cell")

    if within is not None:
        if start.cell != tuple(within):
            raise InvalidParameterError(
                f"Start {start} is not an edge of cell {within}"
            )
        first = [arc for arc in g.out_arcs(start) if arc[0].cell == start.cell]
        partner = g.grid.partners[start]
        if allow_uturn and partner is not None:
            first.append((partner, g.uturn_cost(start)))
    else:
        first = g.out_arcs(start)

    dist: Dict[EdgeRef, float] = {start: 0.0}
    prev: Dict[EdgeRef, EdgeRef] = {}
    settled = {start}
    queue: List[Tuple[float, EdgeRef]] = []

    def relax(u: EdgeRef, du: float, arcs: List[Tuple[EdgeRef, float]]) -> None:
        for v, w in arcs:
            if v in settled or v.cell in excluded:
                continue
            nd = du + w
            known = dist.get(v, math.inf)
            if nd < known or (nd == known and u < prev[v]):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(queue, (nd, v))

    relax(start, 0.0, first)
    while queue:
        du, u = heapq.heappop(queue)
        if u in settled or du > dist[u]:
            continue
        settled.add(u)
        if u == goal:
            break
        relax(u, du, g.out_arcs(u))

    if goal not in settled:
        raise UnreachableGoalError(f"No path from {start} to {goal}")

    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    path.reverse()
    return PlannedPath(tuple(path), dist[goal])
