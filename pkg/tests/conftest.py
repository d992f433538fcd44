from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from spiderchain.chain_model import LegRates, SpiderParams, validate
from spiderchain.spider_rw import RWParams, rw_weight

DATA = Path(__file__).parent / "data"

SPIDER3 = RWParams(3, F(1, 5), F(11, 20), F(1, 4), (F(1, 2), F(1, 8), F(1, 6), F(5, 24)))


@pytest.fixture(scope="session")
def rw3():
    return SPIDER3


@pytest.fixture(scope="session")
def chain3():
    return SPIDER3.chain()


@pytest.fixture(scope="session")
def weight3():
    return rw_weight(SPIDER3)


@pytest.fixture(scope="session")
def chain_path():
    return DATA / "spider3.json"


@pytest.fixture(scope="session")
def bumpy():
    """Two legs with different prefixes and tails."""
    params = SpiderParams(
        N=2,
        alpha=(0.3, 0.3, 0.4),
        legs=(
            LegRates(prefix=((0.5, 0.2, 0.3), (0.1, 0.6, 0.3)), tail=(0.25, 0.35, 0.4)),
            LegRates(prefix=((0.3, 0.3, 0.4),), tail=(0.2, 0.3, 0.5)),
        ),
    )
    return validate(params)


@pytest.fixture(scope="session")
def ragged():
    """Non-constant chain on which every convergent satisfies 0 < A_n < B_n."""
    params = SpiderParams(
        N=2,
        alpha=(0.6, 0.2, 0.2),
        legs=(
            LegRates(prefix=((0.13, 0.7, 0.17), (0.34, 0.39, 0.27)), tail=(0.13, 0.64, 0.23)),
            LegRates(prefix=((0.24, 0.61, 0.15), (0.32, 0.55, 0.13)), tail=(0.22, 0.52, 0.26)),
        ),
    )
    return validate(params)


@st.composite
def constant_walks(draw, max_legs=4):
    """Constant-rate spider walks with all probabilities bounded away from 0."""
    N = draw(st.integers(1, max_legs))
    a = draw(st.floats(0.05, 0.45))
    c = draw(st.floats(0.05, 0.45))
    b = 1.0 - a - c
    raw = np.array(draw(st.lists(st.floats(0.1, 1.0), min_size=N + 1, max_size=N + 1)))
    alpha = tuple(float(v) for v in raw / raw.sum())
    alpha = alpha[:-1] + (1.0 - sum(alpha[:-1]),)
    return RWParams(N, a, b, c, alpha)
