import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")

# Every (A, A_d, h) certified by an LMI anywhere in the session; re-checked by the
# soundness gate, which is moved to the very end of the run.
CERTIFICATES = []


@pytest.fixture(scope="session")
def cert_ledger():
    return CERTIFICATES


def record_certificate(A, A_d, h, source):
    CERTIFICATES.append((np.array(A, dtype=float), np.array(A_d, dtype=float), float(h), source))


@pytest.fixture(scope="session")
def record():
    return record_certificate


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other test in the session")
    config.addinivalue_line("markers", "slow: long-running synthesis runs")


def pytest_collection_modifyitems(session, config, items):
    last = [it for it in items if it.get_closest_marker("run_last")]
    items[:] = [it for it in items if not it.get_closest_marker("run_last")] + last


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE[key])
