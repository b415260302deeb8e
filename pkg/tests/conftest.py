"""Pytest fixtures and configuration."""

import logging
import math
from collections.abc import Iterator
from pathlib import Path

import pytest

from qbsense.fockspace import ChargeSector, TwoModeSpace, enumerate_sector
from qbsense.model import BatteryModelParams


@pytest.fixture
def sector_n4() -> ChargeSector:
    """Charging sector ``n = Q = 4``."""
    return enumerate_sector(4, 4)


@pytest.fixture
def qsl_model_n4() -> BatteryModelParams:
    """Reference n = 4 battery with QSL-matched coupling (g = 1)."""
    return BatteryModelParams.from_qsl(1.0, 4, 4)


@pytest.fixture
def fig2_params() -> BatteryModelParams:
    """Reference squeezing model ``(n, omega0, g_n) = (4, 1, 1/sqrt(6))``."""
    return BatteryModelParams(n=4, omega0=1.0, g_n=1 / math.sqrt(6))


@pytest.fixture
def small_space() -> TwoModeSpace:
    """Small truncated space for operator checks."""
    return TwoModeSpace(3, 8)


@pytest.fixture
def isolated_cwd(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Run from an empty directory so no project pyproject.toml is picked up."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture(autouse=True)
def restore_root_logging() -> Iterator[None]:
    """Undo the handler swap done by CLI commands."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
