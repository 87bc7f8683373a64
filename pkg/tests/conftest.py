import numpy as np
import pytest

from frictionlab import friction as fr
from frictionlab import market as mk


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quad():
    """Power friction with Lambda = 1, alpha = 2."""
    return fr.FrictionSpec.power(1.0, 2.0)


@pytest.fixture
def binomial_one_step():
    """S0 = 1, leaves 2 and 0.5 with probability one half each, T = 1."""
    return mk.build_binomial_tree(mk.GBMParams(1.0, 0.0, 0.2), mk.TimeGrid.uniform(1.0, 1),
                                  rule=(2.0, 0.5, 0.5))


@pytest.fixture
def rising():
    """Deterministic price 1 -> 2 over one unit of time."""
    return mk.deterministic_tree([1.0, 2.0], mk.TimeGrid.uniform(1.0, 1))
