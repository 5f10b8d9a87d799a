import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from ranksel.ranking_models import CandidatePool

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@st.composite
def superstar_pools(draw, n_min=2, n_max=6, v2_zero=False):
    n = draw(st.integers(n_min, n_max))
    v2 = 0.0 if v2_zero else draw(st.floats(0.0, 0.9))
    p1 = draw(st.floats(0.02, 0.95))
    p2 = draw(st.floats(p1, 0.98))
    g = draw(st.floats(1.0, 10.0))
    return CandidatePool.superstar(1.0, v2, n, p1, p2, gamma1=g, gamma2=g)


@st.composite
def general_pools(draw, n_min=2, n_max=5, distinct=True):
    n = draw(st.integers(n_min, n_max))
    vals = sorted(draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n)), reverse=True)
    if distinct:
        # spread the values so every pair is strictly ordered
        vals = [x + 0.05 * (n - i) for i, x in enumerate(vals)]
        vals = sorted(vals, reverse=True)
    ps = sorted(draw(st.lists(st.floats(0.03, 0.97), min_size=n, max_size=n)))
    g = draw(st.floats(1.0, 6.0))
    return CandidatePool(tuple(vals), tuple(ps), (g,) * n)


def random_pool(rng, n, distinct=True, gamma=None):
    vals = np.sort(rng.uniform(0, 1, n))[::-1]
    if distinct:
        vals = vals + 0.02 * np.arange(n, 0, -1)
        vals = np.sort(vals)[::-1]
    ps = np.sort(rng.uniform(0.03, 0.97, n))
    g = rng.uniform(1, 6) if gamma is None else gamma
    return CandidatePool(tuple(vals), tuple(ps), (g,) * n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda x: int(x.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
