import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"

# criterion number -> (description, "PASS" | "FAIL" | "SKIP", note)
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        desc, status, note = ACCEPTANCE_RESULTS[n]
        line = f"[{status}] criterion {n}: {desc}"
        if note:
            line += f" ({note})"
        terminalreporter.write_line(line)
