import pytest

from varnonlocal.exponent_field import field_from_expression
from varnonlocal.grid import BoxDomain, sample

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail summary line; echoed in the terminal summary."""
    def record(number: int, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def unit1024():
    return BoxDomain.interval(0.0, 1.0, 1024)


@pytest.fixture
def p2():
    return field_from_expression({"kind": "constant", "value": 2.0}, 1)


@pytest.fixture
def sine1024(unit1024):
    return sample({"kind": "sine"}, unit1024)
