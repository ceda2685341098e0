import pytest

from aspdistill import fixture
from aspdistill.solver import ExecutableNotFound, SolverConfig, resolve_command

_CRITERIA = pytest.StashKey[dict]()


def _solver_available() -> bool:
    try:
        resolve_command(SolverConfig())
    except ExecutableNotFound:
        return False
    return True


requires_solver = pytest.mark.skipif(not _solver_available(), reason="no clingo executable or module")


@pytest.fixture(scope="session")
def cfg():
    if not _solver_available():
        pytest.skip("no clingo executable or module")
    return SolverConfig()


@pytest.fixture(scope="session")
def full():
    return fixture.full_theory()


@pytest.fixture(scope="session")
def train():
    return fixture.train_corpus()


@pytest.fixture(scope="session")
def test_suite():
    return fixture.test_corpus()


@pytest.fixture
def record_criterion(request):
    """Remember an acceptance verdict so the terminal summary can list it."""
    results = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, ok, detail: str = ""):
        """``ok`` is True, False, or None for a criterion that was skipped."""
        results[number] = (ok, detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        verdict = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {detail}")
