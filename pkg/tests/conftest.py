import time
from contextlib import contextmanager

import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context manager that records one PASS/FAIL/SKIP line for an acceptance criterion.

    The body may fill the yielded dict with details shown next to the verdict.
    """
    lines = request.config.stash.setdefault(_LINES, [])

    @contextmanager
    def run(name):
        info = {}
        t0 = time.perf_counter()
        verdict = "FAIL"
        try:
            yield info
            verdict = "PASS"
        except pytest.skip.Exception:
            verdict = "SKIP"
            raise
        finally:
            detail = ", ".join(f"{k}={v}" for k, v in info.items())
            line = f"{verdict}  {name}  [{time.perf_counter() - t0:.1f}s]  {detail}"
            lines.append(line)
            print(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
