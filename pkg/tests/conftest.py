import contextlib

import pytest

_RESULTS: dict[int, tuple[str, bool, str]] = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks: list[tuple[bool, str]] = []

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))


@pytest.fixture
def criterion():
    """Record acceptance checks; each criterion gets one PASS/FAIL line in the summary."""

    @contextlib.contextmanager
    def open_criterion(number, title):
        c = _Criterion(number, title)
        try:
            yield c
        except Exception as exc:
            _RESULTS[number] = (title, False, f"raised {type(exc).__name__}: {exc}")
            raise
        ok = bool(c.checks) and all(ok for ok, _ in c.checks)
        detail = "; ".join(d for _, d in c.checks)
        _RESULTS[number] = (title, ok, detail)
        print(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
        failed = [d for ok, d in c.checks if not ok]
        assert not failed, "; ".join(failed)

    return open_criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok, detail = _RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
