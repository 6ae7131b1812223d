"""
Replicated multi-case studies

A study is a base scenario plus named cases, each a set of dotted-path
overrides (kt_mode, discount_window_s, range_Rs_mi, ...). Every case runs the
same replications; replication r of every case uses the child seed derived
from (master_seed, r), so cases are compared on identical origin/destination
sets. Runs are independent and may execute in a process pool; aggregation
happens after all of them have joined.
"""

import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.stats import ttest_ind

from . import __version__, entropy
from .exceptions import (
    ConfigValidationError,
    DegenerateSampleError,
    SimulationTimeout,
    StudyRunError,
)
from .hexgeom import CellCoord
from .pattern_map import PatternMap, TraversalRecord
from .scenario import (
    SCHEMA_VERSION,
    ODPair,
    ScenarioConfig,
    apply_overrides,
    load_config_file,
    parse_document,
    pydantic_violations,
    validate,
)
from .simulation import AIRCRAFT_COLUMNS, SERIES_COLUMNS, EventKind, RunResult, SimEvent
from .simulation import run as run_scenario
from .utils import atomic_path, atomic_write_text, config_hash, write_frame

logger = logging.getLogger(__name__)

# Overrides under these paths would break the matching between cases.
SHARED_FIELDS = (
    "schema_version",
    "name",
    "grid",
    "spawn_schedule",
    "replications",
    "master_seed",
    "od_pairing",
)

CASE_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

SERIES_MEAN_COLUMNS = [
    "active_count",
    "queued_count",
    "total_entropy",
    "mean_kt",
    "mean_density",
]


class CaseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    description: str = ""
    overrides: Dict[str, Any] = Field(default_factory=dict)


class StudySpec(BaseModel):
    """Base scenario and the cases compared against each other"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    name: str = "study"
    base_config: Optional[str] = None
    base: ScenarioConfig = Field(default_factory=ScenarioConfig)
    base_overrides: Dict[str, Any] = Field(default_factory=dict)
    cases: List[CaseSpec] = Field(default_factory=list)

    @property
    def replications(self) -> int:
        return self.base.replications

    @property
    def case_names(self) -> List[str]:
        return [case.name for case in self.cases]

    def case_config(self, case: CaseSpec) -> ScenarioConfig:
        return apply_overrides(self.base, {**case.overrides, "name": case.name})

    def case_configs(self) -> Dict[str, ScenarioConfig]:
        return {case.name: self.case_config(case) for case in self.cases}

    def with_base(self, **updates: Any) -> "StudySpec":
        """Copy with top-level base fields replaced (seed, replications, ...)"""
        base = apply_overrides(self.base, updates)
        return self.model_copy(update={"base": base})

    def resolved(self) -> Dict[str, Any]:
        """Self-contained form with the base inlined"""
        data = self.model_dump(mode="json")
        data["base_config"] = None
        data["base_overrides"] = {}
        return data


def validate_study(spec: StudySpec) -> List[str]:
    """Every invariant violation, as `field.path: message`"""
    errors: List[str] = []
    if spec.schema_version != SCHEMA_VERSION:
        errors.append(f"schema_version: unsupported version {spec.schema_version}")
    errors.extend(f"base.{v}" for v in validate(spec.base))
    if len(spec.cases) < 2:
        errors.append(f"cases: a study needs at least 2 cases, got {len(spec.cases)}")

    seen = set()
    for i, case in enumerate(spec.cases):
        path = f"cases.{i}"
        if not CASE_NAME.match(case.name):
            errors.append(f"{path}.name: '{case.name}' is not a valid case name")
        if case.name in seen:
            errors.append(f"{path}.name: duplicate case name '{case.name}'")
        seen.add(case.name)

        shared = [
            key
            for key in case.overrides
            if any(key == f or key.startswith(f + ".") for f in SHARED_FIELDS)
        ]
        for key in shared:
            errors.append(f"{path}.overrides.{key}: must be shared by every case")
        if shared:
            continue
        try:
            cfg = spec.case_config(case)
        except ConfigValidationError as e:
            errors.extend(f"{path}.overrides: {v}" for v in e.violations)
            continue
        errors.extend(f"{path}.{v}" for v in validate(cfg))
    return errors


def load_study(
    text: str, base_dir: Union[str, Path, None] = None, strict: bool = True
) -> StudySpec:
    """Parse a study document; `base_config` paths resolve against base_dir

    A run manifest is accepted too: its embedded resolved study is used.
    """
    data = parse_document(text)
    if isinstance(data.get("study"), dict):
        data = data["study"]
    if data.get("base_config") is not None and "base" in data:
        raise ConfigValidationError(
            ["base_config: cannot be combined with an inline base"]
        )
    try:
        spec = StudySpec.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(pydantic_violations(e)) from e

    if spec.base_config is not None:
        base_path = Path(base_dir or ".") / spec.base_config
        spec = spec.model_copy(
            update={"base": load_config_file(base_path, strict=False)}
        )
    if spec.base_overrides:
        spec = spec.model_copy(
            update={"base": apply_overrides(spec.base, spec.base_overrides)}
        )
    if strict:
        violations = validate_study(spec)
        if violations:
            raise ConfigValidationError(violations)
    return spec


def load_study_file(path: Union[str, Path], strict: bool = True) -> StudySpec:
    path = Path(path)
    spec = load_study(path.read_text(encoding="utf-8"), path.parent, strict)
    logger.info(
        f"Loaded study '{spec.name}' with {len(spec.cases)} cases from {path}"
    )
    return spec


@dataclass
class CaseRun:
    """Outputs of one replication of one case"""

    case: str
    replication: int
    seed: int
    end_time: float
    aircraft: pd.DataFrame
    series: pd.DataFrame
    events: List[str]
    ods: List[ODPair]

    @property
    def mean_travel_time(self) -> float:
        if self.aircraft.empty:
            return math.nan
        return float(self.aircraft["travel_time_s"].mean())

    @property
    def final_entropy(self) -> float:
        return float(self.series["total_entropy"].iloc[-1])

    @classmethod
    def from_result(cls, case: str, result: RunResult) -> "CaseRun":
        return cls(
            case=case,
            replication=result.replication,
            seed=result.seed,
            end_time=result.end_time,
            aircraft=result.aircraft_frame(),
            series=result.series_frame(),
            events=result.event_lines(),
            ods=result.ods,
        )


def _execute(case: str, cfg: ScenarioConfig, replication: int) -> CaseRun:
    try:
        result = run_scenario(cfg, replication, case=case)
    except SimulationTimeout as e:
        raise StudyRunError(case, replication, e) from e
    return CaseRun.from_result(case, result)


def _labelled(frame: pd.DataFrame, case: str, replication: int) -> pd.DataFrame:
    out = frame.copy()
    out.insert(0, "replication", replication)
    out.insert(0, "case", case)
    return out


@dataclass
class StudyResult:
    spec: StudySpec
    configs: Dict[str, ScenarioConfig]
    runs: Dict[Tuple[str, int], CaseRun] = field(default_factory=dict)

    @property
    def cases(self) -> List[str]:
        return self.spec.case_names

    @property
    def replications(self) -> int:
        return self.spec.replications

    def ordered_runs(self) -> List[CaseRun]:
        return [
            self.runs[(case, r)]
            for case in self.cases
            for r in range(self.replications)
        ]

    def aircraft_table(self) -> pd.DataFrame:
        frames = [
            _labelled(run.aircraft, run.case, run.replication)
            for run in self.ordered_runs()
        ]
        columns = ["case", "replication"] + AIRCRAFT_COLUMNS
        if not frames:
            return pd.DataFrame(columns=columns)
        return pd.concat(frames, ignore_index=True)[columns]

    def series_table(self) -> pd.DataFrame:
        frames = [
            _labelled(run.series, run.case, run.replication)
            for run in self.ordered_runs()
        ]
        columns = ["case", "replication"] + SERIES_COLUMNS
        if not frames:
            return pd.DataFrame(columns=columns)
        return pd.concat(frames, ignore_index=True)[columns]

    def replication_table(self) -> pd.DataFrame:
        """One row per (case, replication) with the mean travel time"""
        aircraft = self.aircraft_table()
        means = (
            aircraft.groupby(["case", "replication"], sort=False)["travel_time_s"]
            .mean()
            .rename("mean_travel_time_s")
        )
        rows = []
        for run in self.ordered_runs():
            rows.append(
                {
                    "case": run.case,
                    "replication": run.replication,
                    "seed": run.seed,
                    "aircraft_count": len(run.aircraft),
                    "mean_travel_time_s": means.get(
                        (run.case, run.replication), math.nan
                    ),
                    "end_time_s": run.end_time,
                    "final_total_entropy": run.final_entropy,
                }
            )
        return pd.DataFrame(rows)

    def replication_means(self, case: str) -> List[float]:
        table = self.replication_table()
        return table.loc[table["case"] == case, "mean_travel_time_s"].tolist()

    def pooled_means(self) -> Dict[str, float]:
        return {
            case: float(np.mean(self.replication_means(case))) for case in self.cases
        }

    def p_values(self) -> pd.DataFrame:
        """Welch p-value for every unordered pair of cases"""
        rows = []
        for a, b in combinations(self.cases, 2):
            try:
                p = welch_t_test(self.replication_means(a), self.replication_means(b))
            except DegenerateSampleError as e:
                logger.warning(f"No p-value for {a} vs {b}: {e}")
                p = math.nan
            rows.append({"case_a": a, "case_b": b, "p_value": p})
        return pd.DataFrame(rows, columns=["case_a", "case_b", "p_value"])

    def summary_table(self) -> pd.DataFrame:
        reps = self.replication_table()
        aircraft = self.aircraft_table()
        pvals = self.p_values()
        lookup: Dict[Tuple[str, str], float] = {}
        for row in pvals.itertuples(index=False):
            lookup[(row.case_a, row.case_b)] = row.p_value
            lookup[(row.case_b, row.case_a)] = row.p_value

        rows = []
        for case in self.cases:
            per_rep = reps.loc[reps["case"] == case]
            flights = aircraft.loc[aircraft["case"] == case]
            means = per_rep["mean_travel_time_s"]
            row: Dict[str, Any] = {
                "case": case,
                "replications": len(per_rep),
                "mean_tt": float(means.mean()),
                "sd_tt": float(means.std(ddof=1)) if len(means) > 1 else math.nan,
                "mean_path_miles": float(flights["path_miles"].mean()),
                "mean_cum_heading_deg": float(flights["cum_heading_deg"].mean()),
                "mean_hold_count": float(flights["hold_count"].mean()),
                "mean_final_entropy": float(per_rep["final_total_entropy"].mean()),
            }
            for other in self.cases:
                if other != case:
                    row[f"p_vs_{other}"] = lookup.get((case, other), math.nan)
            rows.append(row)

        summary = pd.DataFrame(rows)
        best = summary["mean_tt"].idxmin() if summary["mean_tt"].notna().any() else None
        summary["best"] = summary.index == best
        return summary

    def mean_series(self) -> pd.DataFrame:
        """Per-case means over replications, by sample time"""
        series = self.series_table()
        return (
            series.groupby(["case", "time_s"], sort=False)[SERIES_MEAN_COLUMNS]
            .mean()
            .reset_index()
        )

    def matched_ods(self) -> bool:
        """True when every case consumed the same ODs in each replication"""
        for r in range(self.replications):
            ods = {tuple(self.runs[(case, r)].ods) for case in self.cases}
            if len(ods) > 1:
                return False
        return True


def run_study(spec: StudySpec, max_workers: int = 1) -> StudyResult:
    """Run every case for every replication; results do not depend on workers"""
    configs = spec.case_configs()
    tasks = [
        (case, configs[case], r)
        for r in range(spec.replications)
        for case in spec.case_names
    ]
    logger.info(
        f"Study '{spec.name}': {len(configs)} cases x {spec.replications} "
        f"replications on {max_workers} worker(s)"
    )

    result = StudyResult(spec=spec, configs=configs)
    if max_workers <= 1:
        runs = []
        for task in tasks:
            runs.append(_execute(*task))
            logger.debug(f"Finished {task[0]} replication {task[2]}")
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(_execute, *task) for task in tasks]
            runs = [future.result() for future in futures]

    for run in runs:
        result.runs[(run.case, run.replication)] = run
    if not result.matched_ods():
        logger.warning(f"Study '{spec.name}': cases did not share OD assignments")
    return result


def welch_t_test(a: Iterable[float], b: Iterable[float]) -> float:
    """Two-sided Welch (unequal variance) t-test p-value"""
    x = np.asarray(list(a), dtype=float)
    y = np.asarray(list(b), dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise DegenerateSampleError(
            f"Each sample needs at least 2 values, got {len(x)} and {len(y)}"
        )
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DegenerateSampleError("Samples must be finite")
    if np.var(x) == 0 and np.var(y) == 0:
        raise DegenerateSampleError("Both samples have zero variance")
    p = float(ttest_ind(x, y, equal_var=False).pvalue)
    return min(max(p, 0.0), 1.0)


def _event_file(case: str, replication: int) -> str:
    return f"events/{case}_rep{replication:03d}.jsonl"


def build_manifest(result: StudyResult, files: List[str]) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "study_name": result.spec.name,
        "replications": result.replications,
        "base_config_hash": config_hash(result.spec.base.model_dump(mode="json")),
        "cases": [
            {
                "name": case.name,
                "overrides": case.overrides,
                "config_hash": config_hash(
                    result.configs[case.name].model_dump(mode="json")
                ),
            }
            for case in result.spec.cases
        ],
        "seeds": {
            case: [result.runs[(case, r)].seed for r in range(result.replications)]
            for case in result.cases
        },
        "files": sorted(files),
        "study": result.spec.resolved(),
    }


def emit_outputs(
    result: StudyResult,
    out_dir: Union[str, Path],
    excel: bool = False,
    event_logs: bool = True,
) -> List[Path]:
    """Write the study tables, event logs and manifest; returns written paths"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = result.summary_table()
    pvalues = result.p_values()
    replications = result.replication_table()

    written = [
        write_frame(result.aircraft_table(), out / "aircraft.csv"),
        write_frame(result.series_table(), out / "series.csv"),
        write_frame(result.mean_series(), out / "mean_series.csv"),
        write_frame(replications, out / "replications.csv"),
        write_frame(summary, out / "summary.csv"),
        write_frame(pvalues, out / "pvalues.csv"),
    ]
    if event_logs:
        for run in result.ordered_runs():
            text = "".join(line + "\n" for line in run.events)
            written.append(
                atomic_write_text(out / _event_file(run.case, run.replication), text)
            )
    if excel:
        with atomic_path(out / "summary.xlsx") as tmp:
            with pd.ExcelWriter(tmp, engine="openpyxl") as writer:
                summary.to_excel(writer, sheet_name="Summary", index=False)
                pvalues.to_excel(writer, sheet_name="PValues", index=False)
                replications.to_excel(writer, sheet_name="Replications", index=False)
        written.append(out / "summary.xlsx")

    files = [p.relative_to(out).as_posix() for p in written]
    manifest = build_manifest(result, files)
    written.append(
        atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    )
    logger.info(f"Wrote {len(written)} files for study '{result.spec.name}' to {out}")
    return written


def emit_run_outputs(
    result: RunResult,
    cfg: ScenarioConfig,
    out_dir: Union[str, Path],
    event_logs: bool = True,
) -> List[Path]:
    """Outputs of a single scenario run"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_frame(result.aircraft_frame(), out / "aircraft.csv"),
        write_frame(result.series_frame(), out / "series.csv"),
        atomic_write_text(
            out / "traversals.txt",
            "".join(rec.to_line() + "\n" for rec in result.traversals),
        ),
    ]
    if event_logs:
        text = "".join(line + "\n" for line in result.event_lines())
        written.append(atomic_write_text(out / "events.jsonl", text))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "scenario_name": cfg.name,
        "config_hash": config_hash(cfg.model_dump(mode="json")),
        "replication": result.replication,
        "seed": result.seed,
        "end_time_s": result.end_time,
        "files": sorted(p.relative_to(out).as_posix() for p in written),
        "scenario": cfg.model_dump(mode="json"),
    }
    written.append(
        atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    )
    return written


# -- replay ------------------------------------------------------------------


@dataclass
class ReplayReport:
    """Metrics and safety checks re-derived from an event log"""

    event_count: int
    end_time: float
    aircraft: pd.DataFrame
    traversals: List[TraversalRecord]
    pattern_map: PatternMap
    final_entropy: float
    final_support_size: int
    scheduled: int
    spawned: int
    arrived: int
    capacity_violations: List[str] = field(default_factory=list)
    conservation_violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.capacity_violations and not self.conservation_violations


def _cell_of(value: List[int]) -> CellCoord:
    return CellCoord(int(value[0]), int(value[1]))


def replay(events: Iterable[Union[str, SimEvent]], cfg: ScenarioConfig) -> ReplayReport:
    """Rebuild the pattern map and per-aircraft metrics from a run's event log"""
    parsed = [e if isinstance(e, SimEvent) else SimEvent.from_json(e) for e in events]
    grid = cfg.build_grid()
    occupancy: Dict[CellCoord, int] = {}
    stage: Dict[int, str] = {}
    rows: Dict[int, Dict[str, Any]] = {}
    records: List[TraversalRecord] = []
    capacity: List[str] = []
    conservation: List[str] = []
    last_key: Optional[Tuple[float, int]] = None

    def enter(ev: SimEvent, cell: CellCoord) -> None:
        holder = occupancy.get(cell)
        if holder is not None and holder != ev.aircraft_id:
            capacity.append(
                f"t={ev.time:g}: aircraft {ev.aircraft_id} entered cell "
                f"{tuple(cell)} held by aircraft {holder}"
            )
        occupancy[cell] = ev.aircraft_id

    def leave(ev: SimEvent, cell: CellCoord) -> None:
        if occupancy.get(cell) != ev.aircraft_id:
            conservation.append(
                f"t={ev.time:g}: aircraft {ev.aircraft_id} left cell {tuple(cell)} "
                f"it did not occupy"
            )
        else:
            del occupancy[cell]

    def expect(ev: SimEvent, wanted: str, new: str) -> None:
        current = stage.get(ev.aircraft_id, "none")
        if current != wanted:
            conservation.append(
                f"t={ev.time:g}: aircraft {ev.aircraft_id} {ev.kind.value} while "
                f"{current}"
            )
        stage[ev.aircraft_id] = new

    for ev in parsed:
        key = (ev.time, ev.seq)
        if last_key is not None and key <= last_key:
            conservation.append(f"seq {ev.seq}: log is not ordered by (time, seq)")
        last_key = key
        p = ev.payload
        row = rows.setdefault(
            ev.aircraft_id,
            {"aircraft_id": ev.aircraft_id, "hold_count": 0, "replan_count": 0},
        )

        if ev.kind is EventKind.SPAWN_SCHEDULED:
            expect(ev, "none", "scheduled")
            row["intro_time"] = p["intro_time"]
        elif ev.kind is EventKind.ENTERED_GRID:
            expect(ev, "scheduled", "airborne")
            row["entry_time"] = ev.time
            enter(ev, _cell_of(p["cell"]))
        elif ev.kind is EventKind.ENTERED_CELL:
            expect(ev, "airborne", "airborne")
            previous = _cell_of(p["prev_cell"])
            records.append(
                TraversalRecord(previous, p["prev_entry"], p["prev_exit"], ev.time)
            )
            leave(ev, previous)
            enter(ev, _cell_of(p["cell"]))
        elif ev.kind is EventKind.ARRIVED:
            expect(ev, "airborne", "arrived")
            cell = _cell_of(p["cell"])
            records.append(TraversalRecord(cell, p["entry"], p["exit"], ev.time))
            leave(ev, cell)
            row["arrival_time"] = ev.time
            row["travel_time_s"] = p["travel_time"]
            row["path_miles"] = p["path_miles"]
            row["cum_heading_deg"] = p["cum_heading_change"]
        elif ev.kind is EventKind.HOLD_START:
            row["hold_count"] += 1
        elif ev.kind is EventKind.REPLANNED:
            row["replan_count"] += 1

    end_time = parsed[-1].time if parsed else 0.0
    pmap = PatternMap.replay(records, cfg.discount_window_s)
    airborne = sum(v == "airborne" for v in stage.values())
    arrived = sum(v == "arrived" for v in stage.values())

    columns = [
        "aircraft_id",
        "intro_time",
        "entry_time",
        "arrival_time",
        "travel_time_s",
        "path_miles",
        "cum_heading_deg",
        "hold_count",
        "replan_count",
    ]
    table = pd.DataFrame([rows[i] for i in sorted(rows)], columns=columns)
    return ReplayReport(
        event_count=len(parsed),
        end_time=end_time,
        aircraft=table,
        traversals=records,
        pattern_map=pmap,
        final_entropy=entropy.airspace_entropy(
            pmap, grid, end_time, cfg.entropy_log_base
        ),
        final_support_size=entropy.support_size(pmap, grid, end_time),
        scheduled=len(stage),
        spawned=airborne + arrived,
        arrived=arrived,
        capacity_violations=capacity,
        conservation_violations=conservation,
    )


def replay_file(path: Union[str, Path], cfg: ScenarioConfig) -> ReplayReport:
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    report = replay(lines, cfg)
    logger.info(
        f"Replayed {report.event_count} events from {path}: "
        f"{report.arrived}/{report.scheduled} arrived"
    )
    return report
