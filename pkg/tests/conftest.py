import pytest

from carnot_sf.acceptance import run_suite
from carnot_sf.experiments import ExperimentSpec

SEED = 0
_verdicts: dict[str, bool] = {}


@pytest.fixture(scope="session")
def suite_run():
    """One full suite run shared by every acceptance test."""
    return run_suite(ExperimentSpec("suite", seed=SEED))


@pytest.fixture
def verdict(request):
    """Record an acceptance verdict under the test's criterion label."""
    label = request.node.get_closest_marker("criterion").args[0]

    def record(ok: bool):
        _verdicts[label] = _verdicts.get(label, True) and bool(ok)
        return ok

    yield record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion checked by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker and call.when in ("setup", "call") and call.excinfo is not None:
        _verdicts[marker.args[0]] = False


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_verdicts):
        terminalreporter.write_line(f"{'PASS' if _verdicts[label] else 'FAIL'}  {label}")
