"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, settings

from ppowerloss import intensity

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record (criterion, part) -> (passed, detail); summarized after the run."""
    results = request.config.stash[_ACCEPTANCE]

    def record(criterion: int, part: str, passed: bool, detail: str):
        results.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"criterion {criterion} [{part}]: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        parts = results[criterion]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name}: {'ok' if p else 'FAILED'} ({d})" for name, p, d in parts)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} -- {detail}")


@pytest.fixture
def homogeneous100():
    return intensity.homogeneous(1.0, 100.0)


@pytest.fixture
def amplitude50():
    """S(theta, x) = theta (2 + cos 2 pi x) + 0.5 on [0, 50]."""
    return intensity.amplitude(1.0, 50.0, dark_current=0.5)


@pytest.fixture
def expsine100():
    """exp(sin(theta x)) at theta0 = 1 over 100 whole periods."""
    return intensity.exp_sine(1.0, 100 * 2 * math.pi)
