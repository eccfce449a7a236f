import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fbdeopt import AgvParams, KeepOutZone, control_box, make_agv_model, make_lti_model  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

OBSTACLES = [((3.0, 0.0), 0.61), ((6.1, -1.0), 0.81), ((10.0, 0.4), 1.02)]
BOXES = [(0, 2.0, 2.35), (1, -1.5, 1.0)]
X0_AGV = np.array([0.0, -1.0, 0.0])


def agv_constraints():
    cons = []
    for idx, lo, hi in BOXES:
        cons += control_box(idx, lo, hi, 3, 2)
    cons += [KeepOutZone(c, r, 3, 2) for c, r in OBSTACLES]
    return cons


def agv_model(N=160, constrained=True):
    return make_agv_model(AgvParams(0.05, 2.3, 0.0), N, agv_constraints() if constrained else ())


def scalar_lti(constraints=()):
    """f = x + u, L = x**2 + u**2."""
    return make_lti_model([[1.0]], [[1.0]], [[1.0]], [[1.0]], constraints=constraints)


LTI_A = np.array([[1.0, 0.1], [0.0, 1.0]])
LTI_B = np.array([[0.005], [0.1]])
LTI_Q = np.diag([10.0, 5.0])
LTI_R = np.array([[5.0]])
LTI_X0 = np.array([1.0, -0.5])


def double_integrator():
    return make_lti_model(LTI_A, LTI_B, LTI_Q, LTI_R)


@pytest.fixture
def agv():
    return agv_model()


@pytest.fixture
def agv_scenario_path():
    return SCENARIOS / "agv_tracking.json"


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
