import pytest

CRITERIA = {
    1: "hemisphere exactness",
    2: "Penrose equality on Schwarzschild",
    3: "mass relation on the catenoid",
    4: "discrete Geroch inequality",
    5: "barriers and gradient decay",
    6: "Willmore floor",
    7: "singularity phenomenology",
    8: "smooth/weak agreement",
    9: "property suite",
}

_outcomes: dict[int, list[tuple[str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "passed" if rep.passed and not hasattr(rep, "wasxfail") else "failed"
        if rep.skipped and not hasattr(rep, "wasxfail"):
            status = "skipped"
        _outcomes.setdefault(marker.args[0], []).append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            tr.write_line(f"criterion {n} ({title}): NOT RUN")
            continue
        failed = [name for name, status in results if status != "passed"]
        flag = "FAIL" if failed else "PASS"
        detail = f" ({', '.join(failed)})" if failed else ""
        tr.write_line(f"criterion {n} ({title}): {flag}{detail}")
