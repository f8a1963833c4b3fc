import numpy as np
import pytest

from projlab import classical as cl

SX = np.array([[0, 1], [1, 0]], complex)
SY = np.array([[0, -1j], [1j, 0]], complex)
SZ = np.array([[1, 0], [0, -1]], complex)
I2 = np.eye(2, dtype=complex)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture(scope="session")
def harmonic_samples():
    """Moderate-size canonical sample of the harmonic pair (m = k = 1, c = 0.5, beta = 1)."""
    return cl.sample_canonical(cl.harmonic_pair(c=0.5), 1.0, 200_000, seed=11)


@pytest.fixture(scope="session")
def uncoupled_samples():
    return cl.sample_canonical(cl.harmonic_pair(c=0.0), 1.0, 200_000, seed=12)


ACCEPTANCE: dict = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    """Store one criterion outcome; printed in the terminal summary."""
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n}. {title}: {detail}")
