import os
import shutil
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from balboa.tls.record import RecordStream  # noqa: E402


class PlanOwner:
    """Minimal RecordStream owner: one fixed plan for every Application Data record."""

    def __init__(self, plan=None):
        self.plan = plan
        self.failures = []
        self.handshake = bytearray()

    def plan_record(self, stream, ctype, version, length):
        return self.plan

    def observe_handshake(self, stream, data):
        self.handshake += data

    def fail(self, reason):
        self.failures.append(reason)


def make_stream(plan=None, direction="out"):
    owner = PlanOwner(plan)
    return RecordStream(direction, owner), owner


@pytest.fixture
def have_cc():
    if not (shutil.which("cc") or shutil.which("gcc")):
        pytest.skip("no C compiler")


# acceptance verdicts: one line per criterion, whatever the way a test ends

_VERDICTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0][:120] if call.excinfo else ""
    line = f"criterion {mark.args[0]}: {'PASS' if rep.passed else 'FAIL'}  {detail}"
    _VERDICTS[mark.args[0]] = line
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
