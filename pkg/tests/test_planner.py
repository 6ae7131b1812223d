"""
Tests for least-cost planning over cell edges
"""

import networkx as nx
import numpy as np
import pytest

from src.airspace.exceptions import InvalidParameterError, UnreachableGoalError
from src.airspace.hexgeom import (
    EDGE_INDICES,
    CellCoord,
    EdgeRef,
    boundary_edges,
    build_grid,
)
from src.airspace.pattern_map import PatternMap, TraversalRecord
from src.airspace.cost_model import total_cost
from src.airspace.planner import (
    EdgeGraph,
    GraphBuilder,
    build_edge_graph,
    least_cost_path,
)


def random_traffic(grid, rng, records=60):
    """Pattern map with random traversals spread over the grid"""
    pmap = PatternMap()
    for t in range(records):
        cell = grid.cells[int(rng.integers(len(grid.cells)))]
        entry, exit_ = (int(x) for x in rng.integers(1, 7, size=2))
        pmap.record_traversal(TraversalRecord(cell, entry, exit_, float(t)))
    return pmap


def oracle_cost(graph, start, goal, within=None, allow_uturn=True):
    """Bellman-Ford on the same arc set, with a virtual source for first moves

    Plans are simple paths, so in-cell starts drop every arc back into `start`.
    """
    digraph = nx.DiGraph()
    for u, v, w in graph.arcs():
        if within is None or v != start:
            digraph.add_edge(u, v, weight=w)
    source = start
    if within is not None:
        source = "source"
        for v, w in graph.out_arcs(start):
            if v.cell == start.cell:
                digraph.add_edge(source, v, weight=w)
        partner = graph.grid.partners[start]
        if allow_uturn and partner is not None:
            digraph.add_edge(source, partner, weight=graph.uturn_cost(start))
    return nx.bellman_ford_path_length(digraph, source, goal, weight="weight")


def assert_connected_path(grid, path):
    for a, b in zip(path.nodes, path.nodes[1:]):
        assert a.cell == b.cell or grid.partners[a] == b


class TestEdgeGraph:
    """Graph structure"""

    def test_radius_one_arc_counts(self, grid_r1):
        """Test 42 nodes, 12 zero-weight pairs and 5 transits per node"""
        g = build_edge_graph(grid_r1, PatternMap(), 0.0, 0.0)
        assert len(g.nodes) == 42
        assert len(g.zero_arcs()) == 12
        transits = [(u, v) for u, v, _ in g.arcs() if u.cell == v.cell]
        assert len(transits) == 42 * 5
        assert sum(1 for u, v, w in g.arcs() if u.cell != v.cell) == 24

    def test_weights_without_traffic(self, grid_r1):
        """Test transit weights are U + 1 with an empty map"""
        g = build_edge_graph(grid_r1, PatternMap(), 6.0, 0.0)
        weights = dict(((u, v), w) for u, v, w in g.arcs())
        cell = CellCoord(0, 0)
        assert weights[(EdgeRef(cell, 1), EdgeRef(cell, 4))] == pytest.approx(
            2.5 * np.sqrt(3) + 1.0
        )
        assert g.uturn_cost(EdgeRef(cell, 1)) == pytest.approx(11.0)

    def test_weights_never_negative(self, grid_r1):
        """Test heavy single-pair traffic is floored at zero"""
        pmap = PatternMap()
        for t in range(10):
            pmap.record_traversal(TraversalRecord(CellCoord(0, 0), 1, 2, float(t)))
        g = build_edge_graph(grid_r1, pmap, 6.024, 10.0)
        assert min(w for u, v, w in g.arcs() if u.cell == v.cell) == 0.0
        floored = build_edge_graph(grid_r1, pmap, 6.024, 10.0, floor=0.5)
        assert min(w for u, v, w in floored.arcs() if u.cell == v.cell) == 0.5

    def test_negative_floor_rejected(self, grid_r1):
        """Test the floor must be non-negative"""
        with pytest.raises(InvalidParameterError):
            build_edge_graph(grid_r1, PatternMap(), 0.0, 0.0, floor=-1.0)

    def test_directed_arcs_follow_traffic_direction(self, grid_r1):
        """Test traffic from 1 to 4 discounts only that direction"""
        pmap = PatternMap()
        pmap.record_traversal(TraversalRecord(CellCoord(0, 0), 1, 4, 0.0))
        g = build_edge_graph(grid_r1, pmap, 3.0, 0.0)
        cell = CellCoord(0, 0)
        weights = dict(((u, v), w) for u, v, w in g.arcs())
        forward = weights[(EdgeRef(cell, 1), EdgeRef(cell, 4))]
        backward = weights[(EdgeRef(cell, 4), EdgeRef(cell, 1))]
        assert forward == pytest.approx(backward - 3.0)


class TestLeastCostPath:
    """Dijkstra against an independent oracle"""

    def test_straight_crossing(self, grid_r1, straight_od):
        """Test an empty grid is crossed in a straight line"""
        g = build_edge_graph(grid_r1, PatternMap(), 0.0, 0.0)
        start, goal = straight_od
        path = least_cost_path(g, start, goal, within=start.cell)
        cells = [n.cell for n in path.nodes]
        assert cells == [
            CellCoord(-1, 0),
            CellCoord(-1, 0),
            CellCoord(0, 0),
            CellCoord(0, 0),
            CellCoord(1, 0),
            CellCoord(1, 0),
        ]
        assert path.total_cost == pytest.approx(3 * (2.5 * np.sqrt(3) + 1.0))

    def test_start_equals_goal(self, grid_r1, straight_od):
        """Test a trivial plan has zero cost"""
        g = build_edge_graph(grid_r1, PatternMap(), 0.0, 0.0)
        path = least_cost_path(g, straight_od[0], straight_od[0])
        assert path.nodes == (straight_od[0],)
        assert path.total_cost == 0.0

    def test_matches_oracle(self):
        """Test Dijkstra equals Bellman-Ford on 200 random fixtures"""
        rng = np.random.default_rng(2024)
        grids = [build_grid(1), build_grid(2)]
        for fixture in range(200):
            grid = grids[fixture % 2]
            k_t = (0.0, 3.0, 6.0)[fixture % 3]
            g = build_edge_graph(grid, random_traffic(grid, rng), k_t, 100.0)
            nodes = grid.edges
            start = nodes[int(rng.integers(len(nodes)))]
            goal = nodes[int(rng.integers(len(nodes)))]
            if start == goal:
                continue
            path = least_cost_path(g, start, goal)
            assert path.start == start and path.goal == goal
            assert_connected_path(grid, path)
            assert path.total_cost == pytest.approx(
                oracle_cost(g, start, goal), abs=1e-9
            )

    def test_within_mode_matches_oracle(self):
        """Test the in-cell start with U-turn seeding against the oracle"""
        rng = np.random.default_rng(99)
        grid = build_grid(2)
        interior = [ref for ref in grid.edges if grid.partners[ref] is not None]
        for fixture in range(60):
            k_t = (0.0, 3.0, 6.0)[fixture % 3]
            g = build_edge_graph(grid, random_traffic(grid, rng), k_t, 100.0)
            start = interior[int(rng.integers(len(interior)))]
            goal = boundary_edges(grid)[int(rng.integers(30))]
            path = least_cost_path(g, start, goal, within=start.cell)
            expected = oracle_cost(g, start, goal, within=start.cell)
            assert path.total_cost == pytest.approx(expected, abs=1e-9)

    def test_deterministic(self, grid_r2):
        """Test repeated planning yields the same node sequence"""
        rng = np.random.default_rng(5)
        g = build_edge_graph(grid_r2, random_traffic(grid_r2, rng), 3.0, 100.0)
        edges = boundary_edges(grid_r2)
        first = least_cost_path(g, edges[0], edges[15])
        assert all(
            least_cost_path(g, edges[0], edges[15]).nodes == first.nodes
            for _ in range(5)
        )


class TestUturnsAndExclusion:
    """First-move options and blocked cells"""

    def setup_method(self):
        """Setup test fixtures"""
        self.grid = build_grid(1)
        self.start = EdgeRef(CellCoord(0, 0), 2)
        self.goal = EdgeRef(CellCoord(1, 0), 2)
        costs = {cell: [[100.0] * 6 for _ in EDGE_INDICES] for cell in self.grid.cells}
        costs[CellCoord(0, 0)][1][1] = 1.0
        self.graph = EdgeGraph(self.grid, costs)

    def test_uturn_chosen_when_cheapest(self):
        """Test the U-turn back through the entry edge is taken"""
        path = least_cost_path(
            self.graph, self.start, self.goal, within=self.start.cell
        )
        assert path.nodes[1] == EdgeRef(CellCoord(1, 0), 5)
        assert path.total_cost == pytest.approx(101.0)

    def test_uturn_disabled(self):
        """Test the first move stays in the cell without U-turns"""
        path = least_cost_path(
            self.graph, self.start, self.goal, within=self.start.cell, allow_uturn=False
        )
        assert path.nodes[1].cell == self.start.cell

    def test_excluded_cell_avoided(self):
        """Test a plan never enters an excluded cell"""
        g = build_edge_graph(self.grid, PatternMap(), 0.0, 0.0)
        start = EdgeRef(CellCoord(-1, 0), 5)
        path = least_cost_path(
            g, start, self.goal, within=start.cell, exclude_cells=[CellCoord(0, 0)]
        )
        assert CellCoord(0, 0) not in {n.cell for n in path.nodes}

    def test_unreachable_goal(self):
        """Test an excluded goal cell cannot be reached"""
        g = build_edge_graph(self.grid, PatternMap(), 0.0, 0.0)
        with pytest.raises(UnreachableGoalError):
            least_cost_path(g, self.start, self.goal, exclude_cells=[CellCoord(1, 0)])

    def test_within_requires_start_cell(self):
        """Test the start edge must belong to the given cell"""
        with pytest.raises(InvalidParameterError):
            least_cost_path(
                self.graph, self.start, self.goal, within=CellCoord(1, 0)
            )


class TestGraphBuilder:
    """Weights reused until the windowed traffic changes"""

    def setup_method(self):
        """Setup test fixtures"""
        self.grid = build_grid(2)
        self.pmap = PatternMap(discount_window=500.0)
        self.pmap.record_traversal(TraversalRecord(CellCoord(0, 0), 1, 4, 0.0))
        self.pmap.record_traversal(TraversalRecord(CellCoord(1, -1), 2, 6, 50.0))
        self.builder = GraphBuilder(self.grid, self.pmap)

    def test_weights_match_cost_model(self):
        """Test every cell row equals the floored total cost at that instant"""
        g = self.builder.graph(4.0, 100.0)
        for cell in self.grid.cells:
            T = self.pmap.windowed_matrix(cell, 100.0)
            expected = np.maximum(total_cost(self.grid.base_unimpeded, T, 4.0), 0.0)
            assert g.cell_costs[cell] == expected.tolist()

    def test_graph_reused_while_traffic_unchanged(self):
        """Test later instants with the same window reuse the graph"""
        g = self.builder.graph(4.0, 100.0)
        assert self.builder.graph(4.0, 200.0) is g
        assert self.builder.graph(2.0, 200.0) is not g

    def test_new_record_rebuilds(self):
        """Test a traversal recorded after planning reaches the next graph"""
        g = self.builder.graph(4.0, 100.0)
        self.pmap.record_traversal(TraversalRecord(CellCoord(0, 0), 1, 4, 120.0))
        rebuilt = self.builder.graph(4.0, 120.0)
        assert rebuilt is not g
        cell = CellCoord(0, 0)
        assert rebuilt.cell_costs[cell] == build_edge_graph(
            self.grid, self.pmap, 4.0, 120.0
        ).cell_costs[cell]

    def test_expired_traffic_restores_idle_costs(self):
        """Test a cell whose records left the window costs U + 1 again"""
        cell = CellCoord(0, 0)
        busy = self.builder.graph(4.0, 100.0).cell_costs[cell]
        idle = self.builder.graph(4.0, 520.0).cell_costs[cell]
        assert busy[0][3] < idle[0][3]
        assert idle == (self.grid.base_unimpeded + 1.0).tolist()

    def test_adjacency_matches_out_arcs(self, grid_r1):
        """Test the adjacency view lists the same arcs as out_arcs"""
        g = build_edge_graph(grid_r1, PatternMap(), 1.0, 0.0)
        for node in grid_r1.edges:
            assert g.adjacency[node] == g.out_arcs(node)
