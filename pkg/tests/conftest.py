import numpy as np
import pytest

from dicerec.splitter import SplitConfig, draw_split
from dicerec.synthetic import planted_factor_table, zipf_table


@pytest.fixture(scope="session")
def zipf_small():
    return zipf_table(n_users=300, n_items=120, n_interactions=6000, seed=3)


@pytest.fixture(scope="session")
def small_split(zipf_small):
    return draw_split(zipf_small, SplitConfig(seed=5))


@pytest.fixture(scope="session")
def planted_small():
    return planted_factor_table(n_users=200, n_items=100, seed=2, offset=-4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary -----------------------------------------------------
# test_acceptance.py records one line per criterion here; the lines are
# printed at the end of the run whatever the capture mode.

ACCEPTANCE: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
