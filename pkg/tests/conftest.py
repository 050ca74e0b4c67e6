import pytest

from gibbs_tess.marks import MarkSet

ACCEPTANCE = pytest.StashKey[dict]()
STRETCH = {10}


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def fixa_marks():
    return MarkSet([(0, 0), (1, 0), (2, 1)])


@pytest.fixture
def record(request):
    """Store and print the outcome of one acceptance criterion."""
    log = request.config.stash[ACCEPTANCE]

    def rec(number: int, passed: bool, detail: str) -> None:
        log[number] = (bool(passed), detail)
        tag = "stretch " if number in STRETCH else ""
        print(f"{tag}criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

    return rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(k for k in log if k not in STRETCH):
        ok, detail = log[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    stretch = sorted(k for k in log if k in STRETCH)
    if stretch:
        terminalreporter.section("stretch criterion (reported separately)")
        for k in stretch:
            ok, detail = log[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
