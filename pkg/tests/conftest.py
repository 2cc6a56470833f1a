from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

REPO = Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"
CASES = REPO / "cases"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIOS


@pytest.fixture(scope="session")
def cases_file() -> Path:
    return CASES / "mini_traps.jsonl"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def dock():
    from ermkit.scenario import load_scenario

    return load_scenario(SCENARIOS / "dock.json")


@pytest.fixture(scope="session")
def dock_scm(dock):
    return dock.scm
