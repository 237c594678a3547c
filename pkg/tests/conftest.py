from __future__ import annotations

import pytest

from pevplan import bind_devices, load_builtin
from pevplan.network import Branch, Bus, Network

# One PASS/FAIL line per acceptance check, echoed after the run so the
# verdicts survive pytest's output capture.  Populated by test_acceptance.py.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"{status}  {name}  [{detail}]")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bus33():
    case, _ = load_builtin()
    return case


@pytest.fixture(scope="session")
def profiles33():
    _, profiles = load_builtin()
    return profiles


@pytest.fixture(scope="session")
def devices33():
    case, profiles = load_builtin()
    return bind_devices(case, profiles)


def small_feeder(n: int = 4, r: float = 0.01, x: float = 0.02) -> Network:
    """Chain of n buses hanging off a slack, light uniform load."""
    buses = [Bus(1, kind="slack")]
    buses += [Bus(i, normal_load_p=0.01, normal_load_q=0.005) for i in range(2, n + 1)]
    branches = [Branch(i, i + 1, r, x, 10.0) for i in range(1, n)]
    return Network(tuple(buses), tuple(branches))


@pytest.fixture
def feeder4():
    return small_feeder(4)
