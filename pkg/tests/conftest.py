import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    num, text = marker.args
    detail = getattr(item, "criterion_detail", "")
    prev = _CRITERIA.get(num)
    passed = rep.passed and (prev is None or prev[0])
    _CRITERIA[num] = (passed, text, detail if detail else (prev[2] if prev else ""))


@pytest.fixture
def detail(request):
    """Record a one-line measurement shown next to the criterion's pass/fail line."""

    def record(text):
        request.node.criterion_detail = text
        print(text)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        passed, text, det = _CRITERIA[num]
        line = f"criterion {num:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        if det:
            line += f"  [{det}]"
        terminalreporter.write_line(line)
