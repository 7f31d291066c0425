import contextlib
import time

import pytest

_RESULTS = pytest.StashKey[dict]()


class _Record:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager recording a numbered acceptance criterion as PASS or FAIL."""
    results = request.config.stash.setdefault(_RESULTS, {})

    @contextlib.contextmanager
    def run(number, title):
        rec = _Record()
        start = time.perf_counter()
        try:
            yield rec
        except BaseException:
            results[number] = ("FAIL", title, rec.detail, time.perf_counter() - start)
            raise
        results[number] = ("PASS", title, rec.detail, time.perf_counter() - start)

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, detail, seconds = results[number]
        extra = f" [{detail}]" if detail else ""
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}{extra} ({seconds:.1f}s)")
