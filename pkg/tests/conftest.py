import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pendulearn.dynamics import RobotParams, pendubot_default  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def unit_params():
    return RobotParams(mass=(1, 1), length=(1, 1), com=(0.5, 0.5), inertia=(0, 0))


@pytest.fixture
def true_params():
    return pendubot_default()


@pytest.fixture
def frictionless():
    return pendubot_default().replace(friction=(0.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


QUICK = """
[scenario]
name = quick
seed = 3

[perturbation]
mass_change = 0.3
com_change = -0.3
friction_scale = 0

[ocp]
T = 0.5
N = 50
start = 3*pi/4, pi/4
goal = pi, 0
Q = 10, 10, 1, 1

[run]
max_iters = 2
hold_time = 0.3
"""


@pytest.fixture
def quick_cfg(tmp_path):
    path = tmp_path / "quick.cfg"
    path.write_text(QUICK)
    return path


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    number, title = marker.args
    if report.when == "setup" and not report.failed:
        return
    status = "PASS" if report.passed else "FAIL"
    detail = getattr(item, "criterion_detail", "")
    ACCEPTANCE[number] = f"criterion {number:>2} [{status}] {title}" + (f": {detail}" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
