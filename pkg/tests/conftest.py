import numpy as np
import pytest

from concept_transfer import bottleneck as B
from concept_transfer import concepts as C
from concept_transfer import encoder as E
from concept_transfer import go_env as g


@pytest.fixture(scope="session")
def hand_agent():
    """Handcrafted encoder, k = 6 concepts and a random policy."""
    states = C.collect_states(None, 4, 0)
    feats = E.handcrafted_encoder_batch(np.stack([g.observe(s) for s in states]))
    cm = C.fit_kmeans(feats, 6, 0)
    return B.Agent(None, cm, B.random_policy(6, 1))


# ------------------------------------------------- acceptance criterion lines

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    ok = rep.passed and rep.when == "call"
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    entry = _CRITERIA.setdefault(marker.args[0], [True, []])
    entry[0] = entry[0] and ok
    if detail:
        entry[1].append(detail)
    elif not ok:
        entry[1].append(f"{item.name} {rep.when} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  "
                                    + " | ".join(details))
