import warnings

import numpy as np
import pytest

from ddstmpc.harness import reference_config, run_experiment

A_TRUE = np.array([[0.7969, -0.2247], [0.1798, 0.9767]])
B_TRUE = np.array([[0.1271], [0.0132]])


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs of the reference experiment")


@pytest.fixture(scope="session")
def reference_run():
    """Reference experiment (seed 0) with the known-model comparison and audits."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = run_experiment(reference_config(0), compare=True, audits=True)
    assert result.ok, result.error
    return result


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Store a one-line verdict for the acceptance summary."""
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(ACCEPTANCE[criterion])
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
