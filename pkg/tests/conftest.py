from __future__ import annotations

import pytest

from qpbench.fixtures import device, noise_model
from qpbench.noise import NoiseModel

TOY = dict(t1=50e-6, t2=70e-6, readout=0.02, p1q=1e-3, p2q=1e-2,
           gate1q_time=35e-9, gate2q_time=300e-9, measure_time=700e-9)


@pytest.fixture(scope="session")
def line6():
    return device("line6")


@pytest.fixture(scope="session")
def melbourne():
    return device("melbourne15")


@pytest.fixture(scope="session")
def kolkata():
    return device("kolkata27")


@pytest.fixture(scope="session")
def noiseless():
    return noise_model("noiseless")


@pytest.fixture(scope="session")
def toy():
    return noise_model("toy_uniform")


@pytest.fixture
def toy6():
    return NoiseModel.uniform(6, **TOY)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
