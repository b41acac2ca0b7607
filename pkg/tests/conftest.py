import pytest

from gfoes.config import ExperimentConfig
from gfoes.experiment import prepare, run_gfoes


@pytest.fixture(scope="session")
def blob_task():
    """Default desk-scale task (seed 0) with its original model."""
    return prepare(ExperimentConfig())


@pytest.fixture(scope="session")
def blob_gfoes(blob_task):
    theta_star, gen, trace, record = run_gfoes(blob_task)
    return theta_star, gen, trace, record


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def criterion(request):
    """Record ``(ok, detail)`` for an acceptance criterion; returns ``ok``."""
    def report(number, ok, detail):
        line = f"C{number:<2d} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config._acceptance[number] = line
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = getattr(config, "_acceptance", {})
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(rows):
            terminalreporter.write_line(rows[n])
