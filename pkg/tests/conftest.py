import numpy as np
import pytest

from distdpo.dpo import DpoConfig
from distdpo.env import FeatureTable, Instance, MdpSpec, make_random_instance
from distdpo.rng import stream
from distdpo.scenario import DataConfig, InstanceConfig, build_problem


def chain_instance(p_stay, features, horizon, initial=(1.0, 0.0)):
    """Two-state, one-feature-per-action chain that stays put with probability ``p_stay``."""
    phi = np.asarray(features, dtype=float)
    S, A = phi.shape[:2]
    P = np.empty((S, A, S))
    for s in range(S):
        P[s, :, :] = (1 - p_stay) / (S - 1)
        P[s, :, s] = p_stay
    return Instance(MdpSpec(S, A, horizon, P, np.asarray(initial, float), phi.shape[2]), FeatureTable(phi))


@pytest.fixture
def small_instance():
    return make_random_instance(4, 3, 4, 5, stream(7, "fixture"))


@pytest.fixture(scope="session")
def default_problem():
    return build_problem(InstanceConfig(), DataConfig(), 5, DpoConfig())


@pytest.fixture(scope="session")
def identical_problem():
    return build_problem(InstanceConfig(), DataConfig(), 5, DpoConfig(), identical=True)


# --- acceptance report ----------------------------------------------------------
# Tests marked ``criterion(n)`` get one PASS/FAIL line each in the terminal
# summary.  A test may attach a short measurement through the ``detail`` fixture.

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): numbered acceptance criterion")


@pytest.fixture
def detail(request):
    notes = []
    request.node._criterion_notes = notes
    return notes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    label = str(mark.args[0])
    notes = "; ".join(getattr(item, "_criterion_notes", []))
    status = "PASS" if rep.passed else "FAIL"
    prev = _CRITERIA.get(label)
    if prev is None or status == "FAIL":
        _CRITERIA[label] = (status, item.name, notes)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda s: (int("".join(c for c in s if c.isdigit()) or 0), s)  # noqa: E731
    for label in sorted(_CRITERIA, key=key):
        status, name, notes = _CRITERIA[label]
        terminalreporter.write_line(f"criterion {label}: {status}  [{name}] {notes}")
