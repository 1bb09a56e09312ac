from pathlib import Path

import pytest

from nblend.data import load_csv, normalize

ROOT = Path(__file__).resolve().parents[1]
IRIS_CSV = ROOT / "data" / "iris.csv"
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def iris():
    ds, _ = normalize(load_csv(IRIS_CSV, "species"), 2)
    return ds


# Acceptance tests append "criterion N: PASS/FAIL ..." lines here; they are
# echoed at the end of the session so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
