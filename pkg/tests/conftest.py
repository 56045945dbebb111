import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from dmcc.model import table1

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return table1()


def angles(limit=1.0):
    return st.floats(-limit, limit, allow_nan=False)


def configurations():
    """Random q with pitch kept well away from gimbal lock."""
    return st.tuples(
        st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1.5),
        angles(1.0), angles(1.0), st.floats(-3.1, 3.1), st.floats(0, 3.1),
    ).map(np.array)


def velocities(scale=2.0):
    return st.lists(st.floats(-scale, scale), min_size=7, max_size=7).map(np.array)


def random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    q = np.column_stack([
        rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(0, 1.5, n),
        rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(-3, 3, n), rng.uniform(0, 3.1, n),
    ])
    qd = rng.uniform(-2, 2, (n, 7))
    return q, qd


@pytest.fixture(scope="session")
def small_static_plan():
    """Static handover on a coarse grid; cheap enough to share across modules."""
    from dmcc.planner import plan_handover
    from dmcc.targets import preset

    spec = preset("static")
    spec.N = 20
    return plan_handover(spec, table1())


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
