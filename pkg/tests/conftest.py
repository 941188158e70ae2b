from __future__ import annotations

import pytest

from dcpension.market import MarketParams, StatePoint

REFERENCE = dict(r=0.03, R=0.06, k=0.5, theta=3.0, sigma=1.5, c=0.2, T=20.0)

_acceptance_lines: list[str] = []


@pytest.fixture
def ref() -> MarketParams:
    """Reference market: stated rates and horizon plus k=0.5, theta=3, sigma=1.5."""
    return MarketParams(**REFERENCE)


@pytest.fixture
def ref_state() -> StatePoint:
    return StatePoint(5.0, 2.0, 500.0)


@pytest.fixture
def acceptance_report():
    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f" -- {detail}"
        _acceptance_lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
