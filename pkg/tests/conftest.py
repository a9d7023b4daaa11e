import numpy as np
import pytest

from fifo_tap.network import parallel_links

# Equilibria of the three-link example: route flows and route costs.
KNOWN_EQUILIBRIA = [
    ((10, 0, 0), (947.5000, 20, 25)),
    ((0, 10, 0), (10, 137.1875, 25)),
    ((0, 0, 10), (10, 20, 487.9630)),
    ((4.0346, 5.9654, 0), (34.8405, 34.8405, 25)),
    ((4.7864, 0, 5.2136), (59.2053, 20, 59.2053)),
    ((0, 6.0762, 3.9238), (10, 35.9740, 35.9740)),
    ((3.5833, 4.6451, 1.7716), (25.4560, 25.4560, 25.4560)),
]


@pytest.fixture
def sheffi():
    return parallel_links([10, 20, 25], [2, 4, 3], 10)


def random_feasible(rng, net, n):
    """Uniform points on each O-D simplex, shape (n, n_routes)."""
    out = np.zeros((n, net.n_routes))
    for i, sl in enumerate(net.od_slices):
        k = sl.stop - sl.start
        out[:, sl] = rng.dirichlet(np.ones(k), size=n) * net.demand[i]
    return out


# -- acceptance reporting: one PASS/FAIL line per criterion ------------------

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "failed": [], "ran": 0})
    if rep.when == "call":
        entry["ran"] += 1
    if rep.failed or rep.skipped:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        ok = entry["ran"] > 0 and not entry["failed"]
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {entry['title']}"
        if entry["failed"]:
            line += f"  (failed: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
