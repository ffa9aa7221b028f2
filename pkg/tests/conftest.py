from functools import lru_cache
from pathlib import Path

import pytest

from bypassdet.synth import HbsConfig, ScenarioConfig, generate

DATA = Path(__file__).parent / "data"
HAND25 = DATA / "hand25.csv"


@lru_cache(maxsize=None)
def small_world(seed: int = 3, **hbs) -> "World":  # noqa: F821
    cfg = ScenarioConfig(seed=seed, days=4, n_subscribers=120, cells=12, n_simboxes=3, sims_per_box=4,
                         hbs=HbsConfig(**hbs))
    return generate(cfg)


@pytest.fixture
def hand25_path() -> Path:
    return HAND25


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
