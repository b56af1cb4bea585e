import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from voltvar.feeder import InverterSpec, bundled_feeder, path_feeder

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def sce56():
    return bundled_feeder()


@pytest.fixture(scope="session")
def caps_off(sce56):
    return {b: False for b in sce56.capacitor_buses}


def two_bus_feeder():
    """One line, load and inverter at the far end."""
    return path_feeder(2, 0.01, 0.02, loads={2: 1.0}, inverters={2: InverterSpec(1.0)})


def five_bus_feeder():
    """Chain 1-2-3-4-5, inverter mid-feeder at bus 3, loads at 3 and the leaf."""
    return path_feeder(5, 0.004, 0.008, loads={3: 0.3, 5: 0.7}, inverters={3: InverterSpec(1.0)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; echoed in the run summary."""
    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
