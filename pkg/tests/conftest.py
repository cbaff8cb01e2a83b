import numpy as np
import pytest
from hypothesis import settings

from crackfusion.experiments import Population, training_distribution

settings.register_profile("fast", max_examples=60, deadline=None)
settings.load_profile("fast")

FS = 10e6


def tone_burst(n=4096, fs=FS, f=200e3, cycles=5, delay=20e-6, amp=1.0, phase=0.0):
    t = np.arange(n) / fs - delay
    dur = cycles / f
    env = np.where((t >= 0) & (t < dur), 0.5 * (1 - np.cos(2 * np.pi * t / dur)), 0.0)
    return amp * env * np.sin(2 * np.pi * f * t - phase)


@pytest.fixture(scope="session")
def growth_dist():
    _, dist = training_distribution(Population(), np.random.default_rng(0))
    return dist


def paris_closed_form(a0, C, m, ds, n):
    """Crack length after ``n`` cycles for f(g) = 1 and constant stress range."""
    k = C * (ds * np.sqrt(np.pi)) ** m
    n = np.asarray(n, dtype=float)
    if m == 2:
        return a0 * np.exp(k * n)
    e = 1.0 - m / 2.0
    return (a0**e + e * k * n) ** (1.0 / e)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
