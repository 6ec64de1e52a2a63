import numpy as np
import pytest

from core.geometry import Configuration, Cube, ObservationDomain
from core.models import AreaInteraction, PoissonModel, TwoTypeStrauss


@pytest.fixture
def unit_window():
    return Cube((0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def unit_domain():
    # unit analysis window with a guard wide enough for every fixture model
    return ObservationDomain((0.5, 0.5), 1.0, guard=0.2)


@pytest.fixture
def poisson():
    return PoissonModel()


@pytest.fixture
def strauss():
    return TwoTypeStrauss(0.1, 0.1, 0.1)


@pytest.fixture
def area():
    return AreaInteraction(0.05)


@pytest.fixture
def poisson_pattern(unit_window):
    rng = np.random.default_rng(7)
    return Configuration(rng.random((60, 2)), window=unit_window)


@pytest.fixture
def strauss_pair(unit_domain):
    """Two mark-1 points at distance 0.05 in the middle of the unit square."""
    return Configuration([[0.5, 0.5], [0.55, 0.5]], [1, 1], window=unit_domain.extended)


@pytest.fixture
def marked_pattern(unit_domain):
    rng = np.random.default_rng(11)
    extended = unit_domain.extended
    positions = np.asarray(extended.lower) + rng.random((120, 2)) * extended.sides
    marks = rng.choice([1, 2], size=120)
    return Configuration(positions, marks, window=extended)
