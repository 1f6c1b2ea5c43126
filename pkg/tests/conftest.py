import contextlib

import pytest

_CRITERIA: list[str] = []


class _Criterion:
    def __init__(self, name: str):
        self.name = name
        self.checks: list[tuple[bool, str]] = []

    def check(self, ok, detail: str) -> bool:
        self.checks.append((bool(ok), detail))
        return bool(ok)


@contextlib.contextmanager
def _record(name: str):
    crit = _Criterion(name)
    try:
        yield crit
    except Exception as exc:
        line = f"FAIL  {name}: raised {type(exc).__name__}: {exc}"
        _CRITERIA.append(line)
        print(line)
        raise
    failed = [d for ok, d in crit.checks if not ok]
    detail = "; ".join(d for _, d in crit.checks)
    line = f"{'FAIL' if failed or not crit.checks else 'PASS'}  {name}: {detail}"
    _CRITERIA.append(line)
    print(line)
    assert crit.checks, f"{name}: no checks recorded"
    assert not failed, f"{name}: " + "; ".join(failed)


@pytest.fixture
def criterion():
    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
