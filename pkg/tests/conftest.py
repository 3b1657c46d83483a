import json
from pathlib import Path

import pytest
from hypothesis import settings

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load_fixture(name: str) -> dict:
    return json.loads(fixture_path(name).read_text())


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def serial_table():
    """Cached outcome tables of serial dictatorship, keyed by (order, quota sizes, n, m)."""
    from functools import lru_cache

    from qmech.core import Quota
    from qmech.mechanisms import SerialDictatorQuota
    from qmech.space import OutcomeTable

    @lru_cache(maxsize=None)
    def build(order, sizes, n, m):
        return OutcomeTable.build(SerialDictatorQuota(order, Quota(sizes)), n, m)

    return lambda order, q, n, m: build(tuple(order), tuple(q.sizes), n, m)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
