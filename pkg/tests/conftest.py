"""
Pytest configuration and fixtures
"""

from pathlib import Path

import pytest

from src.airspace.hexgeom import CellCoord, EdgeRef, build_grid
from src.airspace.scenario import GridConfig, ScenarioConfig, SpawnBatch

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture
def grid_r1():
    """Seven-cell grid"""
    return build_grid(1)


@pytest.fixture
def grid_r2():
    """Nineteen-cell grid"""
    return build_grid(2)


@pytest.fixture
def full_grid():
    """Radius-5 grid with 2.5 mi edges"""
    return build_grid(5, 2.5)


@pytest.fixture
def straight_od():
    """Left-to-right crossing of a radius-1 grid through the center cell"""
    return (EdgeRef(CellCoord(-1, 0), 5), EdgeRef(CellCoord(1, 0), 2))


@pytest.fixture
def single_flight_scenario():
    """One aircraft at t=0 on a radius-1 grid, no traffic following"""
    return ScenarioConfig(
        name="single",
        grid=GridConfig(radius=1),
        kt_mode="fixed:0",
        spawn_schedule=[SpawnBatch(time_s=0.0, count=1)],
        replications=1,
    )


@pytest.fixture
def small_scenario():
    """A few batches on a radius-2 grid; finishes in well under a second"""
    return ScenarioConfig(
        name="small",
        grid=GridConfig(radius=2),
        kt_mode="adaptive",
        range_Rs_mi=10.0,
        discount_window_s=300.0,
        t_hold_s=30.0,
        spawn_schedule=[
            SpawnBatch(time_s=0.0, count=3),
            SpawnBatch(time_s=60.0, count=4),
            SpawnBatch(time_s=150.0, count=3),
        ],
        replications=3,
        master_seed=12345,
    )


@pytest.fixture
def baseline_path():
    """Shipped scenario file with the baseline constants"""
    return CONFIG_DIR / "baseline.json"


@pytest.fixture
def studies_dir():
    """Shipped study files"""
    return CONFIG_DIR / "studies"
