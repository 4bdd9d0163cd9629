import numpy as np
import pytest

from capres.model import barrier_problem

# frozen from the transfer-matrix oracle (argument principle + Newton)
BARRIER_Z = 5.378137567450531 - 0.043149661054700084j
BARRIER_K = 2.3190998502052733 - 0.009303105480965109j


@pytest.fixture(scope="session")
def barrier():
    return barrier_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
