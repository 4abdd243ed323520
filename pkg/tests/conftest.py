from contextlib import contextmanager

import pytest
from hypothesis import HealthCheck, settings

from geoconnect.connect import ConnectVerdict

settings.register_profile(
    "repo", deadline=None, max_examples=40, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# every verdict built in this process, so suite-wide invariants can be checked at the end
VERDICTS = []
_original_init = ConnectVerdict.__init__


def _recording_init(self, *args, **kwargs):
    _original_init(self, *args, **kwargs)
    VERDICTS.append(self)


ConnectVerdict.__init__ = _recording_init

ACCEPTANCE_LINES = []


@contextmanager
def _criterion(number, title):
    info = {}
    try:
        yield info
    except BaseException as exc:
        line = f"FAIL  criterion {number:>2}: {title} ({type(exc).__name__}: {str(exc).splitlines()[0][:120] if str(exc) else ''})"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        raise
    detail = info.get("detail", "")
    line = f"PASS  criterion {number:>2}: {title}" + (f" [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append((number, line))
    print(line)


@pytest.fixture
def criterion():
    return _criterion


@pytest.fixture
def recorded_verdicts():
    return VERDICTS


def pytest_collection_modifyitems(config, items):
    """Suite-wide checks run after everything else."""
    last = [it for it in items if it.get_closest_marker("suite_wide")]
    rest = [it for it in items if not it.get_closest_marker("suite_wide")]
    items[:] = rest + last


def pytest_configure(config):
    config.addinivalue_line("markers", "suite_wide: runs after all other tests and inspects their results")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
