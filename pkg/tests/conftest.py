import sys

import pytest

from focalsweep.config import ProjectConfig
from focalsweep.optics import default_eye
from focalsweep.sweep import build_db


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion when that module ran."""
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for number, description, status, detail in sorted(mod.RESULTS):
        line = f"criterion {number:2d}: {status}  {description}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def eye():
    return default_eye()


@pytest.fixture(scope="session")
def small_config():
    """256 px raster keeps renders fast; physics parameters are defaults."""
    return ProjectConfig(raster_width=256, raster_height=256,
                         pixels_per_radian=1500.0)


@pytest.fixture(scope="session")
def db(small_config):
    """Full 2556-entry waveform database (built once per session)."""
    return build_db(model=small_config.etl)
