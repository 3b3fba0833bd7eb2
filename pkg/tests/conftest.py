import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prefroute.core import HistoryDataset, HistoryInstance, Routing
from prefroute.solve import CvrpProblem

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_instance(t, tours, fleet=None, capacity=None, demands=None, weekday=None):
    r = Routing(tours)
    stops = r.stop_set
    demands = demands or {s: 1 for s in stops}
    return HistoryInstance(t, stops, fleet or max(len(r), 1), demands,
                           capacity or max(sum(demands.values()), 1), r, weekday)


def make_dataset(list_of_tours, **kw):
    return HistoryDataset(tuple(make_instance(t, tours, **kw) for t, tours in enumerate(list_of_tours, start=1)))


def random_problem(rng, n, fleet, capacity=None, exact_fleet=False, order=1, integer_costs=False):
    stops = tuple(range(1, n + 1))
    demands = {s: int(rng.integers(1, 4)) for s in stops}
    if capacity is None:
        capacity = max(max(demands.values()), -(-sum(demands.values()) // fleet) + 1)
    if order == 1:
        c = rng.random((n + 1, n + 1)) * 4
        if integer_costs:
            c = np.round(c)
        return CvrpProblem(stops, fleet, capacity, demands, costs=c, exact_fleet=exact_fleet)
    t = rng.random((n + 1,) * 3) * 4
    d = rng.random(n + 1) * 4
    if integer_costs:
        t, d = np.round(t), np.round(d)
    return CvrpProblem(stops, fleet, capacity, demands, depot_costs=d, tensor=t, exact_fleet=exact_fleet)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"[{status}] {n:>2}. {title}" + (f"  ({detail})" if detail else ""))
