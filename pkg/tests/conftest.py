import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
_VERDICTS = {}


@pytest.fixture(scope="session")
def configs_dir():
    return ROOT / "configs"


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion; the line is printed in the summary."""

    def record(criterion, passed, detail):
        criterion = str(criterion)
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        _VERDICTS.setdefault(criterion, []).append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        for line in _VERDICTS[key]:
            terminalreporter.write_line(line)
