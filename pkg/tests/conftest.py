from pathlib import Path

import pytest

from chainnet.book import load_contracts
from chainnet.pipeline import load_fixture, run_pipeline

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def worked_book():
    return load_contracts((FIXTURES / "worked_book.csv").read_text())


@pytest.fixture
def listed_fixture():
    return load_fixture((FIXTURES / "worked_decomposition.json").read_text())


@pytest.fixture
def listed_groups(worked_book, listed_fixture):
    return {g.group_id: g for g in run_pipeline(worked_book, listed_fixture).groups}


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test body fills in the detail."""
    number = request.node.get_closest_marker("criterion").args[0]
    entry = {"ok": False, "detail": ""}
    ACCEPTANCE[number] = entry
    yield entry
    rep = getattr(request.node, "rep_call", None)
    entry["ok"] = bool(rep and rep.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['detail']}")
