import pytest

_LINES: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")
    config.addinivalue_line("markers", "slow: takes tens of seconds")


@pytest.fixture
def record(request):
    """Log ``criterion N PASS/FAIL: detail`` for the acceptance summary."""

    def _record(ok: bool, detail: str):
        n = request.node.get_closest_marker("criterion").args[0]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        _LINES[n] = line
        print(line)
        return ok

    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n = mark.args[0]
    if rep.failed:
        prev = _LINES.get(n, "")
        if "FAIL" not in prev:
            msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
            _LINES[n] = f"criterion {n:2d} FAIL: {msg}"
    elif n not in _LINES:
        _LINES[n] = f"criterion {n:2d} PASS"


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
