import pytest

# Published sign pattern of Greville weights on a uniform 32-element mesh of
# [0, 1]. Row k, column p-1: '+' all weights positive, '-' some negative,
# '.' infeasible (k >= p).
GREVILLE_SIGNS = {
    0: "+++++++-+-----------",
    1: ".++-+---------------",
    2: "..+++---------------",
    3: "...++++-------------",
    4: "....++++------------",
    5: ".....++++-----------",
    6: "......++++----------",
    7: ".......++++---------",
    8: "........++++--------",
    9: ".........++++-------",
    10: "..........+++-------",
    11: "...........++-------",
    12: "............++------",
    13: ".............++-----",
    14: "..............++----",
    15: "...............++---",
    16: "................++--",
    17: ".................++-",
    18: "..................++",
    19: "...................+",
}


def expected_all_positive(p, k):
    cell = GREVILLE_SIGNS[k][p - 1]
    assert cell != ".", "infeasible (p, k)"
    return cell == "+"


@pytest.fixture
def greville_signs():
    return expected_all_positive


ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


@pytest.fixture
def report(request):
    """Record the outcome of the calling acceptance test under its criterion number."""
    info = {}
    yield info
    rep = getattr(request.node, "rep_call", None)
    number = request.node.get_closest_marker("criterion").args[0]
    ACCEPTANCE[number] = (rep is not None and rep.passed, info.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line("criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail))
