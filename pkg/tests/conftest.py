import pytest

_VERDICTS: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for the acceptance criterion named by the test's marker."""
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else 0

    def record(ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        assert ok, line

    yield record
    if number not in _VERDICTS:
        _VERDICTS[number] = f"criterion {number:>2}: FAIL  did not complete"


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[n])
