from pathlib import Path

import pytest

DATA = Path(__file__).resolve().parents[1] / "src" / "mmln" / "data"

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; the line is printed in the summary."""
    record = {"detail": ""}
    yield record
    failed = getattr(request.node, "rep_call", None)
    ok = failed is not None and failed.passed
    _ACCEPTANCE.append((record.get("name", request.node.name), ok, record["detail"]))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
