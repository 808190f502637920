import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from footfall_lab.ingest import ProbeEvent  # noqa: E402

T0 = datetime(2017, 3, 1, tzinfo=timezone.utc)


def ev(sensor, minute, mac, randomized=False, second=0):
    return ProbeEvent(sensor, T0 + timedelta(minutes=minute, seconds=second), mac, randomized)


@pytest.fixture
def t0():
    return T0


# acceptance results, filled in by test_acceptance and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
