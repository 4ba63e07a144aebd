import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from neuroloop.config import RunConfig
from neuroloop.pipeline import run_calibration
from neuroloop.session import Lesson, Segment


@pytest.fixture(scope="session")
def run_config():
    return RunConfig()


@pytest.fixture(scope="session")
def calibration(run_config):
    """Deterministic model + policy shared by the closed-loop tests."""
    return run_calibration(run_config)


@pytest.fixture
def lesson():
    return Lesson("demo", (
        Segment(60.0, "video:intro", ("hint:1", "hint:2"), "slides:intro"),
        Segment(60.0, "video:main", ("hint:3",), None),
    ))
