import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crashsim.generator import CrossingSpec, generate
from crashsim.scenario import Scenario, VehicleTrack, time_grid

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def straight_track(x0, y0, heading, speed, t0=0.0, t1=8.0, length=4.5, width=1.8, vtype="passenger_car", dt=0.01):
    t = time_grid(t0, t1, dt)
    d = speed * (t - t0)
    rows = np.column_stack([t, x0 + d * math.cos(heading), y0 + d * math.sin(heading), np.full_like(t, heading), np.full_like(t, speed), np.zeros_like(t)])
    return VehicleTrack(vtype, length, width, rows)


@pytest.fixture
def crossing():
    """Ego 10 m/s along +x, opponent 7.5 m/s along +y; both reach the origin at t = 4 s."""
    return generate(CrossingSpec(10.0, 7.5, id="crossing"))


@pytest.fixture
def make_scenario():
    def _make(ego, opp, mu=1.0, obstructions=(), sid="test"):
        return Scenario(sid, ego, opp, obstructions, mu, {})

    return _make


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed now and again in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(num: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        lines.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
