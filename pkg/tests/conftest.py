import json
from pathlib import Path

import numpy as np
import pytest

from ogbmatch.cli import build_experiment, config_from_dict

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# Criterion verdicts collected by test_acceptance, printed after the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def load_cfg(name, **overrides):
    with open(CONFIGS / name) as fh:
        d = json.load(fh)
    d.update(overrides)
    return config_from_dict(d, CONFIGS)


@pytest.fixture(scope="session")
def pendulum_exp():
    return build_experiment(load_cfg("pendulum.json"))


@pytest.fixture(scope="session")
def four_tank_exp():
    return build_experiment(load_cfg("four_tank.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {msg}")
