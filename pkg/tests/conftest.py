import time

import pytest

_CRITERIA: dict[int, str] = {}


class CriterionRecorder:
    """Times one acceptance criterion and records a single pass/fail line."""

    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.start = time.perf_counter()

    def finish(self, passed: bool, detail: str) -> None:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.limit_s
        ok = passed and in_time
        _CRITERIA[self.number] = (
            f"[{'PASS' if ok else 'FAIL'}] {self.number:2d}. {self.title}: {detail}; "
            f"runtime {elapsed:.2f}s (limit {self.limit_s:g}s)"
        )
        assert passed, f"criterion {self.number} failed: {detail}"
        assert in_time, f"criterion {self.number} exceeded {self.limit_s}s ({elapsed:.1f}s)"


@pytest.fixture
def criterion():
    return CriterionRecorder


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
