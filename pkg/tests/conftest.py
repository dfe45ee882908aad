import os
from pathlib import Path

import numpy as np
import pytest

from gdpcast.series import Quarter

ACCEPTANCE: list[tuple[str, str, str]] = []  # (criterion, PASS/FAIL/SKIP, detail)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run long simulation studies marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow simulation study; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {name}: {detail}")


def write_series_csv(path: Path, values, start="1995-Q1") -> Path:
    q = Quarter.parse(start)
    lines = ["period,value"] + [f"{q.shift(i)},{float(v)!r}" for i, v in enumerate(values)]
    path.write_text("\n".join(lines) + "\n")
    return path


def ramp_season(n=120, noise=1.0, seed=7):
    """Linear trend plus a fixed quarterly pattern plus small pinned-seed noise."""
    t = np.arange(n)
    return (100.0 + 2.0 * t + np.array([0.0, 12.0, 6.0, 18.0])[t % 4]
            + np.random.default_rng(seed).normal(0.0, noise, n))


@pytest.fixture
def ramp_csv(tmp_path):
    return write_series_csv(tmp_path / "ramp.csv", ramp_season(), start="1994-Q1")


GDP_HINT = "set GDPCAST_GDP_CSV to the INSSE quarterly GDP CSV (1995-Q1..2023-Q4)"


def gdp_csv_path() -> Path | None:
    path = os.environ.get("GDPCAST_GDP_CSV")
    return Path(path) if path and Path(path).is_file() else None


@pytest.fixture(scope="session")
def gdp_csv():
    path = gdp_csv_path()
    if path is None:
        pytest.skip(GDP_HINT)
    return path
