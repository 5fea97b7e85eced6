import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = pytest.StashKey[list]()


def pytest_addoption(parser):
    parser.addoption("--fresh-sweeps", action="store_true",
                     help="rerun the acceptance sweeps even if cached results exist")


def pytest_configure(config):
    config.stash[CRITERIA] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance check; returns the verdict."""
    lines = request.config.stash[CRITERIA]

    def report(label: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[CRITERIA]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
