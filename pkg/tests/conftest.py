import copy

import numpy as np
import pytest

from uavmec import scenario


def make_doc(ues, slots=50, horizon=120.0, **uav):
    """Default scenario document with the given UEs; ``ues`` is [(x, y, D, C), ...]."""
    doc = scenario.default_document(seed=0, K=len(ues), N=slots)
    doc["time"]["horizon_s"] = float(horizon)
    doc["ues"] = [{"position": [float(x), float(y)], "min_bits": float(D), "cycles_per_bit": float(C)}
                  for x, y, D, C in ues]
    doc["uav"].update(uav)
    return doc


def make_scenario(ues, slots=50, horizon=120.0, **uav):
    return scenario.from_dict(make_doc(ues, slots, horizon, **uav))


@pytest.fixture(scope="session")
def default_scen():
    return scenario.default_scenario(seed=0)


@pytest.fixture
def default_doc():
    return copy.deepcopy(scenario.default_document(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
