import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from wstl.formula import Always, And, Eventually, Interval, Not, Or, Pred, TrueF

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def occupancy_sample():
    return DATA / "occupancy_sample.txt"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)


def formulas(dim=2, max_leaves=6, allow_true=True):
    """Hypothesis strategy for valid formulas over ``dim`` features."""
    pred = st.builds(lambda a, c: Pred(a, c), st.lists(finite, min_size=dim, max_size=dim), finite)
    leaf = st.one_of(pred, st.just(None).map(lambda _: TrueF())) if allow_true else pred

    def extend(child):
        binary = st.builds(lambda cls, l, r, w: cls(l, r, weights=w), st.sampled_from([And, Or]),
                           child, child, st.lists(positive, min_size=2, max_size=2))

        @st.composite
        def temporal(draw):
            k1 = draw(st.integers(0, 3))
            k2 = draw(st.integers(k1, k1 + 3))
            w = draw(st.lists(positive, min_size=k2 - k1 + 1, max_size=k2 - k1 + 1))
            cls = draw(st.sampled_from([Always, Eventually]))
            return cls(Interval(k1, k2), draw(child), weights=w)

        return st.one_of(child.map(Not), binary, temporal())

    return st.recursive(leaf, extend, max_leaves=max_leaves)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
