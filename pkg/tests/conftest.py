import pytest

_RESULTS = pytest.StashKey[dict]()

CRITERIA = {
    1: "dbscan oracle equivalence",
    2: "evaluation oracle equivalence",
    3: "morphology properties",
    4: "codec round-trips",
    5: "end-to-end quality",
    6: "proposal-count fidelity",
    7: "real-time budget",
    8: "determinism",
}


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    results = request.config.stash[_RESULTS]

    def record(number, passed, detail=""):
        results[number] = (bool(passed), detail)
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number} ({CRITERIA[number]}): {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        if number in results:
            passed, detail = results[number]
            terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
        else:
            terminalreporter.write_line(f"[----] {number}. {name}: not run")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" or not report.failed:
        return
    results = item.config.stash[_RESULTS]
    number = marker.args[0]
    if number not in results:
        results[number] = (False, f"raised {call.excinfo.typename}: {call.excinfo.value}")
