import math
from pathlib import Path

import pytest

from nanomech.mechanics import simulate_langevin
from nanomech.model import LOSSLESS, CavityParams, MechanicalMode

TWO_PI = 2 * math.pi
ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def beam():
    """240 kHz, 2 pg, Q_m = 2300 beam at 100 mK."""
    return MechanicalMode(TWO_PI * 240e3, 2e-15, 2300, 0.1)


@pytest.fixture
def cavity():
    return CavityParams(TWO_PI * 5e9, 38000, 14000, z_line=70.0, power_incident=68e-12)


@pytest.fixture
def optimized_cavity():
    return CavityParams(TWO_PI * 12e9, LOSSLESS, 3000)


@pytest.fixture
def optimized_beam():
    return MechanicalMode(TWO_PI * 2e6, 2e-15, 1e5, 0.02)


@pytest.fixture(scope="session")
def long_trajectory():
    # ~8700 / gamma_m of motion: relative std of the sample variance ~1.5%
    mode = MechanicalMode(TWO_PI * 240e3, 2e-15, 2300, 0.1)
    return mode, simulate_langevin(mode, 13.3, seed=12345, decimate=12)


# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        props = dict(report.user_properties)
        _ACCEPTANCE[report.nodeid] = (report.outcome, props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (outcome, title, detail) in sorted(_ACCEPTANCE.items()):
        num = nodeid.split("test_criterion_")[1][:2]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {verdict}  {title}  [{detail}]")
