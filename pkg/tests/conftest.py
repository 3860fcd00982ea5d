from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcswitch.core import ChannelConfig

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def scenario_path(name: str) -> Path:
    return SCENARIOS / f"{name}.toml"


def random_config(rng, n=None, m=None, n_a=None, u_u=None) -> ChannelConfig:
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(max(2, n), 11))
    n_a = n_a or int(rng.integers(1, min(4, m) + 1))
    cols = rng.standard_normal((n, m))
    cols[:, np.linalg.norm(cols, axis=0) < 1e-3] += 1.0
    return ChannelConfig(cols, n_a, float(u_u or rng.uniform(0.5, 5.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance report: one line per criterion, printed in the terminal summary ---

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
