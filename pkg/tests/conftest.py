import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from bourbaki import Poly  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"

coefficients = st.fractions(min_value=-5, max_value=5, max_denominator=4)


def polys(n, max_degree=4, max_terms=5):
    exps = st.lists(st.integers(0, n - 1), max_size=max_degree).map(lambda vs: tuple(vs.count(i) for i in range(n)))
    return st.dictionaries(exps, coefficients, max_size=max_terms).map(lambda t: Poly(n, t))


def points(n):
    return st.lists(st.fractions(min_value=-4, max_value=4, max_denominator=3), min_size=n, max_size=n)


@pytest.fixture(scope="session")
def models_dir():
    return MODELS
