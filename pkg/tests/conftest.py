import time
from contextlib import contextmanager

import pytest

_LINES: list[str] = []


class Criterion:
    """Collects one pass/fail line per acceptance criterion."""

    def __init__(self):
        self.lines = _LINES

    @contextmanager
    def check(self, number: int, title: str, max_seconds: float):
        detail: dict = {}
        start = time.perf_counter()
        try:
            yield detail
        except AssertionError as exc:
            elapsed = time.perf_counter() - start
            self._emit(number, title, False, elapsed, max_seconds, detail, str(exc).splitlines()[0] if str(exc) else "")
            raise
        elapsed = time.perf_counter() - start
        ok = elapsed < max_seconds
        self._emit(number, title, ok, elapsed, max_seconds, detail, "" if ok else "runtime over budget")
        assert ok, f"criterion {number} took {elapsed:.1f} s (budget {max_seconds} s)"

    def _emit(self, number, title, ok, elapsed, budget, detail, note):
        extras = " ".join(f"{k}={v}" for k, v in detail.items())
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({elapsed:.2f} s / {budget:g} s) {extras}"
        if note:
            line += f" [{note}]"
        self.lines.append(line.rstrip())
        print(line)


@pytest.fixture
def criterion():
    return Criterion()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
