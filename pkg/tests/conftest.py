import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context manager that times a check and records a PASS/FAIL line."""
    results = request.config.stash.setdefault(_RESULTS, [])

    @contextmanager
    def check(label, budget_s=None):
        start = time.perf_counter()
        detail = {}
        try:
            yield detail
        except BaseException:
            elapsed = time.perf_counter() - start
            line = f"FAIL  {label}  ({elapsed:.2f} s)"
            results.append(line)
            print(line)
            raise
        elapsed = time.perf_counter() - start
        note = detail.get("note", "")
        if budget_s is not None and elapsed > budget_s:
            line = f"FAIL  {label}  ({elapsed:.2f} s > {budget_s:g} s budget) {note}"
            results.append(line)
            print(line)
            pytest.fail(f"{label}: {elapsed:.2f} s exceeds the {budget_s:g} s budget")
        line = f"PASS  {label}  ({elapsed:.2f} s) {note}".rstrip()
        results.append(line)
        print(line)

    return check


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
