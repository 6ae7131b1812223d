"""
Command-line interface: run, study, replay and validate
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import config
from .exceptions import AirspaceError
from .harness import (
    emit_outputs,
    emit_run_outputs,
    load_study_file,
    replay_file,
    run_study,
    validate_study,
)
from .scenario import apply_overrides, load_config_file, validate
from .simulation import run
from .utils import create_output_directory, save_summary, setup_logging, write_frame

logger = logging.getLogger(__name__)


def _default_seed() -> Optional[int]:
    return int(config.DEFAULT_MASTER_SEED) if config.DEFAULT_MASTER_SEED else None


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="airspace-sim",
        description="Self-organizing airspace simulator and experiment runner",
    )
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    parser.add_argument("--log-file", default=config.LOG_FILE or None)
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="simulate one scenario replication")
    run_cmd.add_argument("config", nargs="?", default=config.DEFAULT_SCENARIO)
    run_cmd.add_argument("--replication", type=int, default=0)
    run_cmd.add_argument("--seed", type=int, default=_default_seed())
    run_cmd.add_argument("--out", type=Path, default=Path(config.OUTPUT_DIRECTORY))
    run_cmd.add_argument(
        "--no-events", action="store_true", help="skip the event log file"
    )

    study_cmd = commands.add_parser("study", help="run a multi-case study")
    study_cmd.add_argument("study", help="study file or a previous study manifest")
    study_cmd.add_argument("--seed", type=int, default=_default_seed())
    study_cmd.add_argument("--replications", type=int, default=None)
    study_cmd.add_argument("--workers", type=int, default=config.MAX_WORKERS)
    study_cmd.add_argument("--out", type=Path, default=Path(config.OUTPUT_DIRECTORY))
    study_cmd.add_argument(
        "--excel",
        action=argparse.BooleanOptionalAction,
        default=config.ENABLE_EXCEL_EXPORT,
    )
    study_cmd.add_argument(
        "--no-events", action="store_true", help="skip per-run event logs"
    )

    replay_cmd = commands.add_parser("replay", help="re-derive metrics from a log")
    replay_cmd.add_argument("events", type=Path)
    replay_cmd.add_argument("--config", required=True, type=Path)
    replay_cmd.add_argument("--out", type=Path, default=None)

    validate_cmd = commands.add_parser("validate", help="check a scenario or study")
    validate_cmd.add_argument("path", type=Path)
    validate_cmd.add_argument(
        "--study", action="store_true", help="treat the file as a study"
    )
    validate_cmd.add_argument(
        "--settings",
        action="store_true",
        help="also check and print the environment settings",
    )
    return parser.parse_args(argv)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    if args.seed is not None:
        cfg = apply_overrides(cfg, {"master_seed": args.seed})
    result = run(cfg, args.replication)
    out = create_output_directory(args.out)
    emit_run_outputs(
        result, cfg, out, event_logs=config.ENABLE_EVENT_LOGS and not args.no_events
    )
    print(
        f"{cfg.name}: {len(result.aircraft)} aircraft arrived by "
        f"t={result.end_time:g}s, mean travel time {result.mean_travel_time:.1f}s"
    )
    return 0


def _cmd_study(args: argparse.Namespace) -> int:
    spec = load_study_file(args.study)
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.replications is not None:
        updates["replications"] = args.replications
    if updates:
        spec = spec.with_base(**updates)
    result = run_study(spec, max_workers=args.workers)
    out = create_output_directory(args.out)
    emit_outputs(
        result,
        out,
        excel=args.excel,
        event_logs=config.ENABLE_EVENT_LOGS and not args.no_events,
    )
    summary = result.summary_table()
    for row in summary.itertuples(index=False):
        marker = "*" if row.best else " "
        print(
            f"{marker} {row.case:<24} mean_tt={row.mean_tt:9.1f}s sd={row.sd_tt:7.1f}"
        )
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config, strict=False)
    report = replay_file(args.events, cfg)
    for problem in report.capacity_violations + report.conservation_violations:
        logger.error(problem)
    if args.out is not None:
        out = create_output_directory(args.out)
        write_frame(report.aircraft, out / "replayed_aircraft.csv")
        save_summary(
            out / "replay.json",
            {
                "event_count": report.event_count,
                "end_time_s": report.end_time,
                "scheduled": report.scheduled,
                "spawned": report.spawned,
                "arrived": report.arrived,
                "traversals": len(report.traversals),
                "final_total_entropy": report.final_entropy,
                "final_support_size": report.final_support_size,
                "capacity_violations": report.capacity_violations,
                "conservation_violations": report.conservation_violations,
            },
        )
    print(
        f"{report.event_count} events, {report.arrived}/{report.scheduled} arrived, "
        f"final entropy {report.final_entropy:.4f}, "
        f"{'OK' if report.ok else 'VIOLATIONS FOUND'}"
    )
    return 0 if report.ok else 1


def _cmd_validate(args: argparse.Namespace) -> int:
    if args.study:
        violations = validate_study(load_study_file(args.path, strict=False))
    else:
        violations = validate(load_config_file(args.path, strict=False))
    if args.settings:
        for key, value in config.get_config_summary().items():
            print(f"{key}: {value}")
        violations = violations + [f"env.{e}" for e in config.validate_config()]
    for violation in violations:
        print(violation)
    if violations:
        return 1
    print(f"{args.path}: OK")
    return 0


COMMANDS = {
    "run": _cmd_run,
    "study": _cmd_study,
    "replay": _cmd_replay,
    "validate": _cmd_validate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    setup_logging("DEBUG" if config.DEBUG else args.log_level, args.log_file)
    try:
        return COMMANDS[args.command](args)
    except AirspaceError as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
