from __future__ import annotations

import contextlib

import pytest

from slr_qlink.link_budget import LaserParams, LinkParameters, find_profile, load_catalog

_GATE_LINES: list[str] = []


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def table1(catalog) -> LinkParameters:
    return find_profile(catalog, "Ajisai").link


@pytest.fixture(scope="session")
def laser(table1) -> LaserParams:
    return table1.laser


class _Outcome:
    detail = ""


@pytest.fixture
def gate():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def check(number: int, title: str):
        outcome = _Outcome()
        try:
            yield outcome
        except BaseException:
            line = f"FAIL criterion {number:>2}: {title} {outcome.detail}".rstrip()
            print(line)
            _GATE_LINES.append(line)
            raise
        line = f"PASS criterion {number:>2}: {title} {outcome.detail}".rstrip()
        print(line)
        _GATE_LINES.append(line)

    return check


def pytest_terminal_summary(terminalreporter):
    if _GATE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_GATE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
