"""
Scenario configuration and origin/destination sampling

Scenarios are JSON documents validated with pydantic. Field names carry their
units. `validate()` lists every invariant violation as `field.path: message`;
`load_config()` raises with those messages (or with a line/column for text
that is not JSON at all).
"""

import json
import logging
import zlib
from pathlib import Path
from typing import Any, Dict, List, Literal, NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .adaptive import SigmoidParams
from .exceptions import ConfigParseError, ConfigValidationError
from .hexgeom import (
    CellCoord,
    EdgeRef,
    GridSpec,
    boundary_edges,
    build_grid,
    hex_distance,
    perimeter_adjacent,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

BASELINE_SPAWN_COUNTS = [
    4, 5, 4, 5, 40, 20, 10, 4, 5, 6, 4, 3,
    10, 40, 20, 10, 5, 10, 30, 20, 10, 6, 5, 3,
]  # fmt: skip
BASELINE_SPAWN_TIMES = [500.0 * i for i in range(len(BASELINE_SPAWN_COUNTS))]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Section):
    radius: int = 5
    cell_edge_length_mi: float = 2.5


class SigmoidConfig(_Section):
    ceiling: float = 6.024
    midpoint_density_per_sq_mi: float = 0.0075965
    slope_scale_per_sq_mi: float = 0.0005

    def to_params(self) -> SigmoidParams:
        return SigmoidParams(
            ceiling=self.ceiling,
            midpoint_density=self.midpoint_density_per_sq_mi,
            slope_scale=self.slope_scale_per_sq_mi,
        )


class SpawnBatch(_Section):
    time_s: float
    count: int


class UnimpededOverride(_Section):
    q: int
    r: int
    entry: int
    exit: int
    cost_mi: float


def baseline_schedule() -> List[SpawnBatch]:
    return [
        SpawnBatch(time_s=t, count=n)
        for t, n in zip(BASELINE_SPAWN_TIMES, BASELINE_SPAWN_COUNTS)
    ]


class ScenarioConfig(_Section):
    """Full parameterization of one simulated scenario"""

    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    grid: GridConfig = Field(default_factory=GridConfig)
    speed_mph: float = 250.0
    dt_s: float = 1.0
    t_hold_s: float = 150.0
    # None disables discounting
    discount_window_s: Optional[float] = None
    # "adaptive" or "fixed:<k_t>"
    kt_mode: str = "adaptive"
    kt_max: float = 6.024
    sigmoid: SigmoidConfig = Field(default_factory=SigmoidConfig)
    kt_update_period_s: float = 100.0
    range_Rs_mi: float = 50.0
    spawn_schedule: List[SpawnBatch] = Field(default_factory=baseline_schedule)
    replications: int = 15
    master_seed: int = 20240601
    max_time_s: Optional[float] = None
    # None is the natural log
    entropy_log_base: Optional[float] = None
    traffic_cost_scale: float = 1.0
    arc_weight_floor_mi: float = 0.0
    allow_uturns: bool = True
    series_period_s: float = 10.0
    od_pairing: Literal["per_replication", "per_case"] = "per_replication"
    unimpeded_overrides: List[UnimpededOverride] = Field(default_factory=list)

    @property
    def is_adaptive(self) -> bool:
        return self.kt_mode.strip().lower() == "adaptive"

    @property
    def fixed_kt(self) -> Optional[float]:
        return parse_kt_mode(self.kt_mode)

    @property
    def total_aircraft(self) -> int:
        return sum(batch.count for batch in self.spawn_schedule)

    @property
    def effective_max_time_s(self) -> float:
        if self.max_time_s is not None:
            return self.max_time_s
        last = self.spawn_schedule[-1].time_s if self.spawn_schedule else 0.0
        return 10.0 * max(last, 3600.0)

    def build_grid(self) -> GridSpec:
        return build_grid(self.grid.radius, self.grid.cell_edge_length_mi)

    def unimpeded_matrices(self, grid: GridSpec) -> Dict[CellCoord, np.ndarray]:
        """Per-cell U matrices for cells that carry overrides"""
        matrices: Dict[CellCoord, np.ndarray] = {}
        for item in self.unimpeded_overrides:
            cell = CellCoord(item.q, item.r)
            u = matrices.setdefault(cell, np.array(grid.base_unimpeded, dtype=float))
            u[item.entry - 1, item.exit - 1] = item.cost_mi
            u[item.exit - 1, item.entry - 1] = item.cost_mi
        return matrices


def parse_kt_mode(mode: str) -> Optional[float]:
    """None for adaptive, the gain for "fixed:<value>"; raises ValueError"""
    text = mode.strip().lower()
    if text == "adaptive":
        return None
    kind, _, value = text.partition(":")
    if kind != "fixed" or not value:
        raise ValueError(f"kt_mode must be 'adaptive' or 'fixed:<value>', got '{mode}'")
    return float(value)


def validate(cfg: ScenarioConfig) -> List[str]:
    """Every invariant violation, as `field.path: message`"""
    errors: List[str] = []

    def check(ok: bool, path: str, message: str) -> None:
        if not ok:
            errors.append(f"{path}: {message}")

    check(
        cfg.schema_version == SCHEMA_VERSION,
        "schema_version",
        f"unsupported version {cfg.schema_version} (expected {SCHEMA_VERSION})",
    )
    check(cfg.grid.radius >= 1, "grid.radius", "must be >= 1")
    check(cfg.grid.cell_edge_length_mi > 0, "grid.cell_edge_length_mi", "must be > 0")
    check(cfg.speed_mph > 0, "speed_mph", "must be > 0")
    check(cfg.dt_s > 0, "dt_s", "must be > 0")
    check(cfg.t_hold_s >= 0, "t_hold_s", "must be >= 0")
    check(
        cfg.discount_window_s is None or cfg.discount_window_s > 0,
        "discount_window_s",
        "must be > 0 or omitted",
    )
    check(cfg.kt_max > 0, "kt_max", "must be > 0")
    try:
        fixed = parse_kt_mode(cfg.kt_mode)
        check(
            fixed is None or 0 <= fixed <= cfg.kt_max,
            "kt_mode",
            f"fixed gain must lie in [0, kt_max={cfg.kt_max}]",
        )
    except ValueError as e:
        errors.append(f"kt_mode: {e}")
    check(cfg.sigmoid.ceiling > 0, "sigmoid.ceiling", "must be > 0")
    check(
        cfg.sigmoid.slope_scale_per_sq_mi > 0,
        "sigmoid.slope_scale_per_sq_mi",
        "must be > 0",
    )
    check(
        cfg.sigmoid.midpoint_density_per_sq_mi >= 0,
        "sigmoid.midpoint_density_per_sq_mi",
        "must be >= 0",
    )
    check(cfg.kt_update_period_s > 0, "kt_update_period_s", "must be > 0")
    check(cfg.range_Rs_mi > 0, "range_Rs_mi", "must be > 0")

    previous = None
    for i, batch in enumerate(cfg.spawn_schedule):
        check(batch.time_s >= 0, f"spawn_schedule.{i}.time_s", "must be >= 0")
        check(batch.count >= 1, f"spawn_schedule.{i}.count", "must be >= 1")
        if previous is not None:
            check(
                batch.time_s > previous,
                f"spawn_schedule.{i}.time_s",
                "times must be strictly increasing",
            )
        previous = batch.time_s

    check(cfg.replications >= 1, "replications", "must be >= 1")
    check(0 <= cfg.master_seed < 2**64, "master_seed", "must fit in 64 unsigned bits")
    check(
        cfg.max_time_s is None or cfg.max_time_s > 0,
        "max_time_s",
        "must be > 0 or omitted",
    )
    check(
        cfg.entropy_log_base is None
        or (cfg.entropy_log_base > 0 and cfg.entropy_log_base != 1),
        "entropy_log_base",
        "must be positive and not 1, or omitted for natural log",
    )
    check(cfg.traffic_cost_scale >= 0, "traffic_cost_scale", "must be >= 0")
    check(cfg.arc_weight_floor_mi >= 0, "arc_weight_floor_mi", "must be >= 0")
    check(cfg.series_period_s > 0, "series_period_s", "must be > 0")

    origin = CellCoord(0, 0)
    for i, item in enumerate(cfg.unimpeded_overrides):
        path = f"unimpeded_overrides.{i}"
        check(
            hex_distance(CellCoord(item.q, item.r), origin) <= cfg.grid.radius,
            path,
            f"cell ({item.q}, {item.r}) is outside the grid",
        )
        check(1 <= item.entry <= 6, f"{path}.entry", "must be in 1..6")
        check(1 <= item.exit <= 6, f"{path}.exit", "must be in 1..6")
        check(item.cost_mi >= 0, f"{path}.cost_mi", "must be >= 0")
    return errors


def pydantic_violations(error: ValidationError) -> List[str]:
    return [
        f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}"
        for err in error.errors()
    ]


def parse_document(text: str) -> Dict[str, Any]:
    """JSON object from text; errors carry line and column"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, e.lineno, e.colno) from e
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be an object", 1, 1)
    return data


def load_config(text: str, strict: bool = True) -> ScenarioConfig:
    """Parse scenario JSON, apply defaults and (when strict) enforce invariants"""
    data = parse_document(text)
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(pydantic_violations(e)) from e
    if strict:
        violations = validate(cfg)
        if violations:
            raise ConfigValidationError(violations)
    return cfg


def load_config_file(path: Union[str, Path], strict: bool = True) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    cfg = load_config(text, strict=strict)
    logger.info(f"Loaded scenario '{cfg.name}' from {path}")
    return cfg


def serialize(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2) + "\n"


def apply_overrides(cfg: ScenarioConfig, overrides: Dict[str, Any]) -> ScenarioConfig:
    """Copy of cfg with dotted-path overrides applied, e.g. {"grid.radius": 3}"""
    data = cfg.model_dump(mode="json")
    for dotted, value in overrides.items():
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(pydantic_violations(e)) from e


def derive_seed(master_seed: int, replication: int, case: Optional[str] = None) -> int:
    """Child seed for one replication; stable across versions and platforms"""
    key = (replication,) if case is None else (replication, zlib.crc32(case.encode()))
    state = np.random.SeedSequence(master_seed, spawn_key=key).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


class ODPair(NamedTuple):
    origin: EdgeRef
    destination: EdgeRef


def sample_od(grid: GridSpec, rng: np.random.Generator) -> ODPair:
    """Uniform ordered pair of distinct, non-adjacent boundary edges"""
    edges = boundary_edges(grid)
    if len(edges) < 3:
        raise ConfigValidationError(["grid: needs at least 3 boundary edges"])
    origin = edges[int(rng.integers(len(edges)))]
    while True:
        destination = edges[int(rng.integers(len(edges)))]
        if destination != origin and not perimeter_adjacent(grid, origin, destination):
            return ODPair(origin, destination)


def assign_ods(grid: GridSpec, count: int, seed: int) -> List[ODPair]:
    rng = np.random.default_rng(seed)
    return [sample_od(grid, rng) for _ in range(count)]
