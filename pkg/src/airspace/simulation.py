"""
Discrete-time airspace simulation

Every tick first spawns due aircraft whose origin cell is free, then moves
each airborne aircraft in ascending id order at constant speed along straight
segments between edge midpoints. Leftover distance carries across waypoints.
A cell holds at most one aircraft; an aircraft whose next cell is occupied
holds at the shared edge for up to t_hold seconds, after which it replans
around the blocking cell. Completed cell transits feed the pattern map, and
every aircraft replans on entering a new cell.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import pandas as pd

from . import entropy
from .adaptive import kt_from_density, local_density
from .exceptions import InvalidParameterError, SimulationTimeout, UnreachableGoalError
from .hexgeom import EDGE_INDICES, CellCoord, EdgeRef, Point, edge_normal_angle
from .pattern_map import PatternMap, TraversalRecord
from .planner import GraphBuilder, PlannedPath, least_cost_path
from .scenario import ODPair, ScenarioConfig, derive_seed, sample_od

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    QUEUED = "queued"
    FLYING = "flying"
    HOLDING = "holding"
    ARRIVED = "arrived"


class EventKind(str, Enum):
    SPAWN_SCHEDULED = "spawn_scheduled"
    ENTERED_GRID = "entered_grid"
    ENTERED_CELL = "entered_cell"
    HOLD_START = "hold_start"
    HOLD_EXPIRED = "hold_expired"
    REPLANNED = "replanned"
    KT_UPDATED = "kt_updated"
    ARRIVED = "arrived"


@dataclass
class SimEvent:
    time: float
    seq: int
    aircraft_id: int
    kind: EventKind
    payload: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        record = {
            "time": self.time,
            "seq": self.seq,
            "aircraft_id": self.aircraft_id,
            "kind": self.kind.value,
            "payload": self.payload,
        }
        return json.dumps(record, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SimEvent":
        record = json.loads(line)
        return cls(
            time=float(record["time"]),
            seq=int(record["seq"]),
            aircraft_id=int(record["aircraft_id"]),
            kind=EventKind(record["kind"]),
            payload=record.get("payload", {}),
        )


@dataclass
class AircraftState:
    id: int
    origin: EdgeRef
    destination: EdgeRef
    intro_time: float
    position: Point
    entry_time: Optional[float] = None
    current_cell: Optional[CellCoord] = None
    entry_edge: Optional[int] = None
    planned_path: Optional[PlannedPath] = None
    k_t: float = 0.0
    density: float = 0.0
    hold_deadline: Optional[float] = None
    hold_target: Optional[EdgeRef] = None
    # cells that blocked holds since the last cell entry
    avoid: List[CellCoord] = field(default_factory=list)
    cum_heading_change: float = 0.0
    heading: Optional[float] = None
    phase: Phase = Phase.QUEUED
    announced: bool = False
    # current leg toward planned_path.nodes[target_index]
    target_index: int = 0
    seg_start: Point = (0.0, 0.0)
    seg_end: Point = (0.0, 0.0)
    seg_length: float = 0.0
    seg_travelled: float = 0.0
    dwelling: bool = False
    hold_count: int = 0
    replan_count: int = 0
    path_miles: float = 0.0
    arrival_time: Optional[float] = None

    @property
    def active(self) -> bool:
        return self.phase in (Phase.FLYING, Phase.HOLDING)

    @property
    def travel_time(self) -> Optional[float]:
        if self.arrival_time is None:
            return None
        return self.arrival_time - self.intro_time


@dataclass
class SimState:
    clock: float
    dt: float
    aircraft: List[AircraftState]
    occupancy: Dict[CellCoord, Optional[int]]
    pattern_map: PatternMap
    rng: np.random.Generator
    tick: int = 0


@dataclass
class RunResult:
    scenario_name: str
    replication: int
    seed: int
    end_time: float
    events: List[SimEvent]
    aircraft: List[Dict[str, Any]]
    series: List[Dict[str, Any]]
    traversals: List[TraversalRecord]
    ods: List[ODPair]

    def aircraft_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.aircraft, columns=AIRCRAFT_COLUMNS)

    def series_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.series, columns=SERIES_COLUMNS)

    def event_lines(self) -> List[str]:
        return [event.to_json() for event in self.events]

    def write_events(self, fp: TextIO) -> None:
        for line in self.event_lines():
            fp.write(line + "\n")

    @property
    def mean_travel_time(self) -> float:
        times = [row["travel_time_s"] for row in self.aircraft]
        return float(np.mean(times)) if times else math.nan


AIRCRAFT_COLUMNS = [
    "aircraft_id",
    "origin_q",
    "origin_r",
    "origin_edge",
    "destination_q",
    "destination_r",
    "destination_edge",
    "intro_time",
    "entry_time",
    "arrival_time",
    "travel_time_s",
    "queue_delay_s",
    "path_miles",
    "cum_heading_deg",
    "hold_count",
    "replan_count",
]

SERIES_COLUMNS = [
    "time_s",
    "scheduled_count",
    "queued_count",
    "active_count",
    "arrived_count",
    "total_entropy",
    "support_size",
    "mean_kt",
    "mean_density",
]


def _cell(cell: CellCoord) -> List[int]:
    return [int(cell.q), int(cell.r)]


def _wrapped_turn(new: float, old: float) -> float:
    return abs((new - old + 180.0) % 360.0 - 180.0)


def _on_period(t: float, period: float) -> bool:
    k = round(t / period)
    return abs(k * period - t) <= 1e-9 * max(1.0, period)


class Simulation:
    """One deterministic run of a scenario"""

    def __init__(
        self,
        scenario: ScenarioConfig,
        replication: int = 0,
        ods: Optional[Sequence[ODPair]] = None,
        case: Optional[str] = None,
    ):
        self.scenario = scenario
        self.replication = replication
        self.grid = scenario.build_grid()
        self.unimpeded = scenario.unimpeded_matrices(self.grid) or None
        self.speed = scenario.speed_mph / 3600.0
        self.sigmoid = scenario.sigmoid.to_params()
        self.adaptive = scenario.is_adaptive
        self.fixed_kt = scenario.fixed_kt
        self.uturn_dwell = 4.0 * self.grid.cell_edge_length

        seed_case = case if scenario.od_pairing == "per_case" else None
        self.seed = derive_seed(scenario.master_seed, replication, seed_case)
        rng = np.random.default_rng(self.seed)
        total = scenario.total_aircraft
        if ods is None:
            ods = [sample_od(self.grid, rng) for _ in range(total)]
        if len(ods) != total:
            raise InvalidParameterError(
                f"Expected {total} origin/destination pairs, got {len(ods)}"
            )
        self.ods = [ODPair(*od) for od in ods]

        aircraft = []
        intro_times = [
            b.time_s for b in scenario.spawn_schedule for _ in range(b.count)
        ]
        for i, (od, intro) in enumerate(zip(self.ods, intro_times)):
            for ref in od:
                if self.grid.partners.get(ref, "missing") is not None:
                    raise InvalidParameterError(f"{ref} is not a boundary edge")
            aircraft.append(
                AircraftState(
                    id=i,
                    origin=od.origin,
                    destination=od.destination,
                    intro_time=intro,
                    position=self.grid.midpoint(od.origin),
                )
            )

        self.state = SimState(
            clock=0.0,
            dt=scenario.dt_s,
            aircraft=aircraft,
            occupancy={cell: None for cell in self.grid.cells},
            pattern_map=PatternMap(scenario.discount_window_s),
            rng=rng,
        )
        self.events: List[SimEvent] = []
        self.series: List[Dict[str, Any]] = []
        self._step_events: List[SimEvent] = []
        self._graphs = GraphBuilder(
            self.grid,
            self.state.pattern_map,
            unimpeded=self.unimpeded,
            traffic_scale=scenario.traffic_cost_scale,
            floor=scenario.arc_weight_floor_mi,
        )
        self._sample(0.0)

    # -- event log -----------------------------------------------------------

    def _emit(self, t: float, ac: AircraftState, kind: EventKind, **payload: Any):
        event = SimEvent(t, len(self.events), ac.id, kind, payload)
        self.events.append(event)
        self._step_events.append(event)

    # -- stepping ------------------------------------------------------------

    def step(self) -> List[SimEvent]:
        """Advance the clock by one tick"""
        st = self.state
        self._step_events = []

        now = st.clock
        for ac in st.aircraft:
            if ac.phase is Phase.QUEUED and ac.intro_time <= now:
                if not ac.announced:
                    ac.announced = True
                    self._emit(
                        now, ac, EventKind.SPAWN_SCHEDULED, intro_time=ac.intro_time
                    )
                if st.occupancy[ac.origin.cell] is None:
                    self._spawn(ac, now)

        st.tick += 1
        st.clock = st.tick * st.dt
        t = st.clock
        budget = self.speed * st.dt
        for ac in st.aircraft:
            if ac.phase is Phase.FLYING:
                self._advance(ac, budget, t)
            elif ac.phase is Phase.HOLDING:
                self._hold_tick(ac, budget, t)

        if self.adaptive and _on_period(t, self.scenario.kt_update_period_s):
            self._update_gains(t)
        if _on_period(t, self.scenario.series_period_s):
            self._sample(t)
        return self._step_events

    def finished(self) -> bool:
        return all(ac.phase is Phase.ARRIVED for ac in self.state.aircraft)

    def run(self) -> RunResult:
        """Step until every aircraft has arrived"""
        cap = self.scenario.effective_max_time_s
        while not self.finished():
            if self.state.clock >= cap:
                arrived = sum(ac.phase is Phase.ARRIVED for ac in self.state.aircraft)
                unfinished = len(self.state.aircraft) - arrived
                raise SimulationTimeout(cap, unfinished, arrived)
            self.step()
        if self.series[-1]["time_s"] != self.state.clock:
            self._sample(self.state.clock)
        logger.info(
            f"Run '{self.scenario.name}' replication {self.replication} finished at "
            f"t={self.state.clock:g}s with {len(self.events)} events"
        )
        return self.result()

    def result(self) -> RunResult:
        rows = [
            self._aircraft_row(ac)
            for ac in self.state.aircraft
            if ac.arrival_time is not None
        ]
        return RunResult(
            scenario_name=self.scenario.name,
            replication=self.replication,
            seed=self.seed,
            end_time=self.state.clock,
            events=list(self.events),
            aircraft=rows,
            series=list(self.series),
            traversals=list(self.state.pattern_map.records()),
            ods=list(self.ods),
        )

    # -- aircraft lifecycle --------------------------------------------------

    def _spawn(self, ac: AircraftState, now: float) -> None:
        st = self.state
        ac.phase = Phase.FLYING
        ac.current_cell = ac.origin.cell
        ac.entry_edge = ac.origin.edge
        ac.entry_time = now
        ac.position = self.grid.midpoint(ac.origin)
        st.occupancy[ac.origin.cell] = ac.id
        if self.adaptive:
            ac.k_t = self._sensed_gain(ac)
        else:
            ac.k_t = self.fixed_kt
        self._emit(
            now,
            ac,
            EventKind.ENTERED_GRID,
            cell=_cell(ac.origin.cell),
            edge=ac.origin.edge,
            k_t=ac.k_t,
        )
        self._replan(ac, now, "spawn")

    def _advance(self, ac: AircraftState, budget: float, t: float) -> None:
        while ac.phase is Phase.FLYING:
            remaining = ac.seg_length - ac.seg_travelled
            if remaining > budget:
                ac.seg_travelled += budget
                ac.path_miles += budget
                if not ac.dwelling:
                    frac = ac.seg_travelled / ac.seg_length
                    (x0, y0), (x1, y1) = ac.seg_start, ac.seg_end
                    ac.position = (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))
                return
            budget -= remaining
            ac.path_miles += remaining
            ac.seg_travelled = ac.seg_length
            ac.position = ac.seg_end
            self._reach(ac, t)

    def _reach(self, ac: AircraftState, t: float) -> None:
        nodes = ac.planned_path.nodes
        node = nodes[ac.target_index]
        if node == ac.destination:
            self._arrive(ac, t)
            return
        nxt = nodes[ac.target_index + 1]
        if nxt.cell == node.cell:
            self._begin_leg(ac, ac.target_index + 1)
            return
        if self.state.occupancy[nxt.cell] is None:
            self._cross(ac, node, nxt, t)
            return

        ac.phase = Phase.HOLDING
        ac.hold_target = nxt
        ac.hold_deadline = t + self.scenario.t_hold_s
        ac.hold_count += 1
        self._emit(
            t,
            ac,
            EventKind.HOLD_START,
            cell=_cell(node.cell),
            edge=node.edge,
            blocked_cell=_cell(nxt.cell),
            blocker=self.state.occupancy[nxt.cell],
            deadline=ac.hold_deadline,
        )

    def _hold_tick(self, ac: AircraftState, budget: float, t: float) -> None:
        target = ac.hold_target
        if self.state.occupancy[target.cell] is None:
            node = ac.planned_path.nodes[ac.target_index]
            self._cross(ac, node, target, t)
            self._advance(ac, budget, t)
        elif t >= ac.hold_deadline:
            if target.cell not in ac.avoid:
                ac.avoid.append(target.cell)
            occupied = self._occupied_neighbors(ac.current_cell)
            self._emit(
                t,
                ac,
                EventKind.HOLD_EXPIRED,
                cell=_cell(ac.current_cell),
                blocked_cell=_cell(target.cell),
                avoid=[_cell(c) for c in ac.avoid],
            )
            ac.phase = Phase.FLYING
            ac.hold_target = None
            ac.hold_deadline = None
            self._replan(
                ac,
                t,
                "hold_expired",
                avoid=(
                    tuple(ac.avoid) + occupied,
                    tuple(ac.avoid),
                    (target.cell,),
                ),
            )
            self._advance(ac, budget, t)

    def _cross(self, ac: AircraftState, node: EdgeRef, nxt: EdgeRef, t: float) -> None:
        st = self.state
        previous = ac.current_cell
        prev_entry = ac.entry_edge
        record = TraversalRecord(previous, prev_entry, node.edge, t)
        st.pattern_map.record_traversal(record)
        st.occupancy[previous] = None
        st.occupancy[nxt.cell] = ac.id
        ac.current_cell = nxt.cell
        ac.entry_edge = nxt.edge
        ac.avoid.clear()
        ac.phase = Phase.FLYING
        ac.hold_target = None
        ac.hold_deadline = None
        self._emit(
            t,
            ac,
            EventKind.ENTERED_CELL,
            cell=_cell(nxt.cell),
            entry=nxt.edge,
            prev_cell=_cell(previous),
            prev_entry=prev_entry,
            prev_exit=node.edge,
        )
        self._replan(ac, t, "entered_cell")

    def _arrive(self, ac: AircraftState, t: float) -> None:
        st = self.state
        cell = ac.current_cell
        exit_edge = ac.destination.edge
        record = TraversalRecord(cell, ac.entry_edge, exit_edge, t)
        st.pattern_map.record_traversal(record)
        st.occupancy[cell] = None
        ac.phase = Phase.ARRIVED
        ac.arrival_time = t
        self._emit(
            t,
            ac,
            EventKind.ARRIVED,
            cell=_cell(cell),
            entry=ac.entry_edge,
            exit=exit_edge,
            travel_time=ac.travel_time,
            path_miles=ac.path_miles,
            cum_heading_change=ac.cum_heading_change,
            holds=ac.hold_count,
        )
        ac.current_cell = None
        ac.entry_edge = None

    # -- planning ------------------------------------------------------------

    def _occupied_neighbors(self, cell: CellCoord) -> Tuple[CellCoord, ...]:
        occupied = []
        for edge in EDGE_INDICES:
            partner = self.grid.partners[EdgeRef(cell, edge)]
            if partner is not None and self.state.occupancy[partner.cell] is not None:
                occupied.append(partner.cell)
        return tuple(occupied)

    def _replan(
        self,
        ac: AircraftState,
        now: float,
        reason: str,
        avoid: Sequence[Tuple[CellCoord, ...]] = (),
    ) -> None:
        """Plan from the current entry edge

        Exclusion sets in `avoid` are tried in order and the first that
        leaves the destination reachable wins; failing all, nothing is
        excluded. U-turns are considered only after a hold expires.
        """
        graph = self._graphs.graph(ac.k_t, now)
        start = EdgeRef(ac.current_cell, ac.entry_edge)
        plan = dict(
            within=ac.current_cell,
            allow_uturn=self.scenario.allow_uturns and reason == "hold_expired",
        )
        path = None
        for exclude in avoid:
            try:
                path = least_cost_path(
                    graph, start, ac.destination, exclude_cells=exclude, **plan
                )
                break
            except UnreachableGoalError:
                logger.debug(
                    f"Aircraft {ac.id}: no route around {list(exclude)} "
                    f"at t={now:g}s"
                )
        if path is None:
            if avoid:
                logger.warning(
                    f"Aircraft {ac.id}: every route around its blockers is cut "
                    f"at t={now:g}s, replanning without exclusions"
                )
            path = least_cost_path(graph, start, ac.destination, **plan)

        ac.planned_path = path
        ac.replan_count += 1
        uturn = len(path.nodes) > 1 and path.nodes[1] == self.grid.partners[start]
        nxt = path.nodes[1] if len(path.nodes) > 1 else path.nodes[0]
        self._emit(
            now,
            ac,
            EventKind.REPLANNED,
            reason=reason,
            cell=_cell(ac.current_cell),
            entry=ac.entry_edge,
            next_cell=_cell(nxt.cell),
            next_edge=nxt.edge,
            path_cost=path.total_cost,
            path_nodes=len(path.nodes),
            uturn=uturn,
            k_t=ac.k_t,
        )
        if uturn:
            self._begin_uturn(ac)
        else:
            self._begin_leg(ac, 1)

    def _begin_leg(self, ac: AircraftState, index: int) -> None:
        target = ac.planned_path.nodes[index]
        end = self.grid.midpoint(target)
        start = ac.position
        dx, dy = end[0] - start[0], end[1] - start[1]
        length = math.hypot(dx, dy)
        if length > 1e-12:
            heading = math.degrees(math.atan2(dy, dx))
            if ac.heading is not None:
                ac.cum_heading_change += _wrapped_turn(heading, ac.heading)
            ac.heading = heading
        ac.target_index = index
        ac.seg_start = start
        ac.seg_end = end
        ac.seg_length = length
        ac.seg_travelled = 0.0
        ac.dwelling = False

    def _begin_uturn(self, ac: AircraftState) -> None:
        # Dwell at the entry-edge midpoint for the U-turn distance, then cross
        # back out through the entry edge.
        entry = ac.planned_path.nodes[0]
        ac.position = self.grid.midpoint(entry)
        if ac.heading is not None:
            ac.cum_heading_change += 180.0
        ac.heading = math.degrees(edge_normal_angle(entry.edge))
        ac.target_index = 0
        ac.seg_start = ac.position
        ac.seg_end = ac.position
        ac.seg_length = self.uturn_dwell
        ac.seg_travelled = 0.0
        ac.dwelling = True

    # -- adaptive gain -------------------------------------------------------

    def _others(self, ac: AircraftState) -> List[Point]:
        return [o.position for o in self.state.aircraft if o.active and o.id != ac.id]

    def _sensed_gain(self, ac: AircraftState) -> float:
        ac.density = local_density(
            ac.position, self._others(ac), self.scenario.range_Rs_mi, self.grid
        )
        return min(kt_from_density(ac.density, self.sigmoid), self.scenario.kt_max)

    def _update_gains(self, t: float) -> None:
        for ac in self.state.aircraft:
            if not ac.active:
                continue
            old = ac.k_t
            ac.k_t = self._sensed_gain(ac)
            self._emit(
                t, ac, EventKind.KT_UPDATED, old=old, new=ac.k_t, density=ac.density
            )

    # -- outputs -------------------------------------------------------------

    def _sample(self, t: float) -> None:
        st = self.state
        scheduled = [ac for ac in st.aircraft if ac.intro_time <= t]
        active = [ac for ac in st.aircraft if ac.active]
        base = self.scenario.entropy_log_base
        kts = [ac.k_t for ac in active]
        snapshot = entropy.sample(st.pattern_map, self.grid, t, base)
        densities = [ac.density for ac in active]
        self.series.append(
            {
                "time_s": t,
                "scheduled_count": len(scheduled),
                "queued_count": sum(ac.phase is Phase.QUEUED for ac in scheduled),
                "active_count": len(active),
                "arrived_count": sum(ac.phase is Phase.ARRIVED for ac in st.aircraft),
                "total_entropy": snapshot.total_entropy,
                "support_size": snapshot.support_size,
                "mean_kt": float(np.mean(kts)) if active else math.nan,
                "mean_density": float(np.mean(densities)) if active else math.nan,
            }
        )

    def _aircraft_row(self, ac: AircraftState) -> Dict[str, Any]:
        return {
            "aircraft_id": ac.id,
            "origin_q": ac.origin.cell.q,
            "origin_r": ac.origin.cell.r,
            "origin_edge": ac.origin.edge,
            "destination_q": ac.destination.cell.q,
            "destination_r": ac.destination.cell.r,
            "destination_edge": ac.destination.edge,
            "intro_time": ac.intro_time,
            "entry_time": ac.entry_time,
            "arrival_time": ac.arrival_time,
            "travel_time_s": ac.travel_time,
            "queue_delay_s": ac.entry_time - ac.intro_time,
            "path_miles": ac.path_miles,
            "cum_heading_deg": ac.cum_heading_change,
            "hold_count": ac.hold_count,
            "replan_count": ac.replan_count,
        }


def step(sim: Simulation) -> List[SimEvent]:
    return sim.step()


def run(
    scenario: ScenarioConfig,
    replication: int = 0,
    ods: Optional[Sequence[ODPair]] = None,
    case: Optional[str] = None,
) -> RunResult:
    """Simulate one replication of a scenario to completion"""
    return Simulation(scenario, replication, ods=ods, case=case).run()
