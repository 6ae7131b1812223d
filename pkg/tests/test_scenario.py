"""
Tests for scenario configuration and origin/destination sampling
"""

import json

import numpy as np
import pytest

from src.airspace.exceptions import ConfigParseError, ConfigValidationError
from src.airspace.hexgeom import CellCoord, boundary_edges, perimeter_adjacent
from src.airspace.scenario import (
    BASELINE_SPAWN_COUNTS,
    ScenarioConfig,
    apply_overrides,
    assign_ods,
    derive_seed,
    load_config,
    load_config_file,
    parse_kt_mode,
    sample_od,
    serialize,
    validate,
)


class TestDefaults:
    """Defaults and the shipped baseline file"""

    def test_baseline_schedule(self):
        """Test 24 batches every 500 s totalling 279 aircraft"""
        cfg = ScenarioConfig()
        assert len(cfg.spawn_schedule) == 24
        assert cfg.spawn_schedule[1].time_s == 500.0
        assert cfg.total_aircraft == sum(BASELINE_SPAWN_COUNTS) == 279
        assert cfg.effective_max_time_s == 115000.0

    def test_baseline_file(self, baseline_path):
        """Test the shipped file carries the baseline constants"""
        cfg = load_config_file(baseline_path)
        assert cfg.grid.cell_edge_length_mi == 2.5
        assert cfg.speed_mph == 250.0
        assert cfg.t_hold_s == 150.0
        assert cfg.discount_window_s == 500.0
        assert cfg.kt_update_period_s == 100.0
        assert cfg.replications == 15
        assert cfg.total_aircraft == 279
        assert cfg.is_adaptive

    def test_omitted_window_disables_discounting(self):
        """Test a missing discount window means no discounting"""
        cfg = load_config('{"name": "x"}')
        assert cfg.discount_window_s is None

    def test_round_trip(self, baseline_path):
        """Test serialize(load(text)) reloads to the same config"""
        cfg = load_config_file(baseline_path)
        assert load_config(serialize(cfg)) == cfg
        assert json.loads(serialize(cfg)) == json.loads(
            baseline_path.read_text()
        )


class TestValidation:
    """Violations and parse errors"""

    def test_negative_hold(self):
        """Test a negative hold time is reported with its field path"""
        cfg = ScenarioConfig(t_hold_s=-1.0)
        assert any(v.startswith("t_hold_s:") for v in validate(cfg))

    def test_all_violations_listed(self):
        """Test several violations are reported together"""
        text = json.dumps(
            {
                "t_hold_s": -5,
                "replications": 0,
                "spawn_schedule": [
                    {"time_s": 100, "count": 2},
                    {"time_s": 50, "count": 0},
                ],
            }
        )
        with pytest.raises(ConfigValidationError) as exc:
            load_config(text)
        paths = {v.split(":")[0] for v in exc.value.violations}
        assert {
            "t_hold_s",
            "replications",
            "spawn_schedule.1.time_s",
            "spawn_schedule.1.count",
        } <= paths

    def test_parse_error_location(self):
        """Test malformed JSON reports line and column"""
        with pytest.raises(ConfigParseError) as exc:
            load_config('{\n  "speed_mph": 250,\n  oops\n}')
        assert exc.value.line == 3
        assert exc.value.column == 3

    def test_unknown_field(self):
        """Test misspelled fields are rejected"""
        with pytest.raises(ConfigValidationError) as exc:
            load_config('{"speed_mhp": 250}')
        assert exc.value.violations[0].startswith("speed_mhp")

    def test_non_strict_load(self):
        """Test invariants are not enforced when strict is off"""
        cfg = load_config('{"t_hold_s": -1}', strict=False)
        assert cfg.t_hold_s == -1.0

    def test_kt_mode(self):
        """Test adaptive and fixed gain modes"""
        assert parse_kt_mode("adaptive") is None
        assert parse_kt_mode("fixed:5") == 5.0
        with pytest.raises(ValueError):
            parse_kt_mode("sometimes")
        violations = validate(ScenarioConfig(kt_mode="fixed:9"))
        assert any(v.startswith("kt_mode") for v in violations)

    def test_override_out_of_grid(self):
        """Test unimpeded overrides must name a grid cell"""
        cfg = ScenarioConfig(
            grid={"radius": 1},
            unimpeded_overrides=[{"q": 3, "r": 0, "entry": 1, "exit": 4, "cost_mi": 1}],
        )
        assert any(v.startswith("unimpeded_overrides.0") for v in validate(cfg))


class TestOverrides:
    """Dotted-path overrides"""

    def test_nested_override(self):
        """Test a nested field and a top-level field are replaced"""
        cfg = apply_overrides(
            ScenarioConfig(), {"grid.radius": 3, "kt_mode": "fixed:6"}
        )
        assert cfg.grid.radius == 3
        assert cfg.fixed_kt == 6.0
        assert ScenarioConfig().grid.radius == 5

    def test_unimpeded_override_symmetric(self, grid_r1):
        """Test overrides change both directions of one pair"""
        cfg = ScenarioConfig(
            grid={"radius": 1},
            unimpeded_overrides=[{"q": 0, "r": 0, "entry": 1, "exit": 4, "cost_mi": 9}],
        )
        u = cfg.unimpeded_matrices(grid_r1)[CellCoord(0, 0)]
        assert u[0, 3] == 9.0 and u[3, 0] == 9.0
        assert u[1, 4] == pytest.approx(2.5 * np.sqrt(3))


class TestSeeds:
    """Child seed derivation"""

    def test_pure_function(self):
        """Test the same inputs always give the same seed"""
        assert derive_seed(42, 3) == derive_seed(42, 3)
        assert derive_seed(42, 3, "a") == derive_seed(42, 3, "a")

    def test_distinct(self):
        """Test replications, masters and cases get distinct seeds"""
        seeds = {derive_seed(42, r) for r in range(15)}
        assert len(seeds) == 15
        assert derive_seed(43, 0) != derive_seed(42, 0)
        assert derive_seed(42, 0, "a") != derive_seed(42, 0, "b")


class TestODSampling:
    """Boundary edge pairs"""

    def test_never_adjacent(self, full_grid):
        """Test no sampled pair repeats an edge or shares a vertex"""
        rng = np.random.default_rng(0)
        edges = set(boundary_edges(full_grid))
        for _ in range(20000):
            od = sample_od(full_grid, rng)
            assert od.origin in edges and od.destination in edges
            assert od.origin != od.destination
            assert not perimeter_adjacent(full_grid, od.origin, od.destination)

    def test_covers_all_valid_pairs(self, grid_r1):
        """Test the small grid's 18 * 15 pairs are all reachable"""
        rng = np.random.default_rng(1)
        seen = {tuple(sample_od(grid_r1, rng)) for _ in range(20000)}
        assert len(seen) == 18 * 15

    def test_seeded_sequence(self, full_grid):
        """Test a fixed seed reproduces the assignment"""
        assert assign_ods(full_grid, 50, 7) == assign_ods(full_grid, 50, 7)
        assert assign_ods(full_grid, 50, 7) != assign_ods(full_grid, 50, 8)
