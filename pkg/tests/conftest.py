import numpy as np
import pytest

from ehhelper import EnergyTrace, builtin_cost_model

ALPHAS = (0.0, 0.3, 0.7, 1.0)

# worked three-slot example shipped as fixtures/three_slot_example.json
EXAMPLE_E = [6.5, 13.5, 9.0]
EXAMPLE_RX = [5.0, 8.0, 3.0]
EXAMPLE_H = [7.0, 1.0, 2.0]
EXAMPLE_ALPHA = 0.7


def random_trace(rng, n=None, alpha=None, high=10.0):
    n = int(rng.integers(2, 5)) if n is None else n
    alpha = float(rng.choice(ALPHAS)) if alpha is None else alpha
    return EnergyTrace.from_lists(rng.uniform(0, high, n), rng.uniform(0, high, n),
                                  rng.uniform(0, high, n), alpha)


@pytest.fixture(scope="session")
def cost():
    return builtin_cost_model()


@pytest.fixture(scope="session")
def example_trace():
    return EnergyTrace.from_lists(EXAMPLE_E, EXAMPLE_RX, EXAMPLE_H, EXAMPLE_ALPHA)


_ACCEPTANCE = []


def record_criterion(label: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((label, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}".rstrip())
