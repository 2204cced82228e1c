import pytest

CRITERIA = {
    1: "gradient check",
    2: "oracle equivalence",
    3: "zero-noise closure",
    4: "ICP recovery",
    5: "overfit oracle",
    6: "relative ordering vs baselines",
    7: "parameter accounting",
    8: "equivariance / invariance",
    9: "threshold semantics",
    10: "reproducibility",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")
    config.addinivalue_line("markers", "acceptance: acceptance-criteria suite")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    state = item.config._criteria.setdefault(n, {"status": "PASS", "detail": ""})
    if rep.failed:
        state["status"] = "FAIL"
    elif rep.skipped and state["status"] == "PASS":
        state["status"] = "SKIP"
    if rep.when != "call":
        return
    for key, val in item.user_properties:
        if key == "detail":
            state["detail"] = f"{state['detail']}; {val}" if state["detail"] else val


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        r = results[n]
        line = f"criterion {n} ({CRITERIA.get(n, '?')}): {r['status']}"
        if r["detail"]:
            line += f"  [{r['detail']}]"
        terminalreporter.write_line(line)
