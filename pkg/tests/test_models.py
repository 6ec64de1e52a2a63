import math

import numpy as np
import pytest

from core.geometry import Configuration, Cube, MarkedPoint
from core.models import (AreaInteraction, PoissonModel, TwoTypeStrauss, added_disc_area, lens_area,
                         make_model)
from utils.exceptions import InvalidMarkError, InvalidParameterError, UnsupportedModelError


def lens(distance, radius=1.0):
    return 2 * radius ** 2 * math.acos(distance / (2 * radius)) \
        - 0.5 * distance * math.sqrt(4 * radius ** 2 - distance ** 2)


# -----------------------------------------------------------------------------
# Poisson
# -----------------------------------------------------------------------------
def test_poisson_energy_is_theta(poisson):
    config = Configuration([[0.1, 0.1], [0.2, 0.2]])
    assert poisson.local_energy([0.7], MarkedPoint((0.5, 0.5)), config) == pytest.approx(0.7)
    assert poisson.sufficient_stats(MarkedPoint((0.5, 0.5)), config).tolist() == [1.0]
    assert poisson.range == 0.0


def test_poisson_stability_constant(poisson):
    assert poisson.stability_constant([-2.0]) == pytest.approx(2.0)
    assert poisson.stability_constant([3.0]) == 0.0


def test_check_theta_shape(poisson):
    with pytest.raises(InvalidParameterError, match="expects 1"):
        poisson.check_theta([1.0, 2.0])
    with pytest.raises(InvalidParameterError, match="finite"):
        poisson.check_theta([np.nan])


def test_unknown_mark_is_rejected(poisson):
    with pytest.raises(InvalidMarkError):
        poisson.local_energy([0.0], MarkedPoint((0.5, 0.5), mark=3), Configuration())


def test_mark_weights_must_sum_to_one():
    with pytest.raises(InvalidParameterError, match="sum to 1"):
        PoissonModel(marks=(1, 2), mark_weights=(0.5, 0.6))


# -----------------------------------------------------------------------------
# Two-type Strauss
# -----------------------------------------------------------------------------
def test_strauss_statistics(strauss):
    config = Configuration([[0.55, 0.5], [0.5, 0.58], [0.9, 0.9]], [1, 2, 1])
    stats = strauss.sufficient_stats(MarkedPoint((0.5, 0.5), 1), config)
    assert stats.tolist() == [1.0, 0.0, 1.0, 1.0, 0.0]
    stats = strauss.sufficient_stats(MarkedPoint((0.5, 0.5), 2), config)
    assert stats.tolist() == [0.0, 1.0, 0.0, 1.0, 1.0]


def test_strauss_constant_combination(strauss, marked_pattern):
    stats, _ = strauss.evaluate(marked_pattern.positions, marked_pattern.marks,
                                marked_pattern.positions, marked_pattern.marks,
                                exclude=np.arange(len(marked_pattern)))
    assert np.allclose(stats @ strauss.constant_combination(), 1.0)


def test_strauss_exclude_matches_removal(strauss, marked_pattern):
    stats, _ = strauss.evaluate(marked_pattern.positions, marked_pattern.marks,
                                marked_pattern.positions, marked_pattern.marks,
                                exclude=np.arange(len(marked_pattern)))
    for i in (0, 17, 63):
        expected = strauss.sufficient_stats(marked_pattern[i], marked_pattern.remove(i))
        assert stats[i].tolist() == expected.tolist()


def test_strauss_local_energy(strauss):
    config = Configuration([[0.55, 0.5]], [1])
    theta = [0.2, 0.4, 0.5, 0.3, 0.1]
    assert strauss.local_energy(theta, MarkedPoint((0.5, 0.5), 1), config) == pytest.approx(0.7)
    assert strauss.local_energy(theta, MarkedPoint((0.5, 0.5), 2), config) == pytest.approx(0.7)


def test_strauss_inhibition_requires_nonnegative_interactions(strauss):
    assert strauss.admissible([0, 0, 0.5, 0, 0])
    with pytest.raises(InvalidParameterError, match="theta2_12"):
        strauss.check_theta([0, 0, 0.5, -0.1, 0])


def test_strauss_hard_core_is_forbidden():
    model = TwoTypeStrauss(0.1, 0.1, 0.1, hard_core=0.02)
    config = Configuration([[0.51, 0.5], [0.8, 0.5]], [2, 1])
    assert math.isinf(model.local_energy([0, 0, -1, -1, -1], MarkedPoint((0.5, 0.5), 1), config))
    # hard core lifts the sign constraint on the interactions
    assert model.admissible([0, 0, -1, -1, -1])


def test_strauss_hard_core_counts_only_beyond_core():
    model = TwoTypeStrauss(0.1, 0.1, 0.1, hard_core=0.02)
    config = Configuration([[0.53, 0.5], [0.5, 0.59]], [1, 1])
    stats = model.sufficient_stats(MarkedPoint((0.5, 0.5), 1), config)
    assert stats.tolist() == [1.0, 0.0, 2.0, 0.0, 0.0]


def test_strauss_removable_points_with_hard_core():
    model = TwoTypeStrauss(0.1, 0.1, 0.1, hard_core=0.015)
    config = Configuration([[0.5, 0.5], [0.51, 0.5], [0.52, 0.5], [0.9, 0.9]], [1, 1, 1, 2])
    # every violating pair involves the middle point only
    assert model.removable_mask(config).tolist() == [False, True, False, False]

    single = Configuration([[0.5, 0.5], [0.51, 0.5], [0.9, 0.9]], [1, 2, 1])
    assert model.removable_mask(single).tolist() == [True, True, False]


def test_removable_points_are_restricted_to_the_region():
    model = TwoTypeStrauss(0.1, 0.1, 0.1, hard_core=0.015)
    config = Configuration([[0.5, 0.5], [0.51, 0.5], [0.52, 0.5], [1.05, 0.5]], [1, 1, 1, 2])
    removable = model.removable_points(config, Cube((0.0, 0.0), (1.0, 1.0)))
    assert len(removable) == 1
    np.testing.assert_allclose(removable.positions, [[0.51, 0.5]])
    assert removable.window == Cube((0.0, 0.0), (1.0, 1.0))


def test_strauss_without_violations_is_fully_removable(strauss, marked_pattern):
    assert strauss.removable_mask(marked_pattern).all()


def test_user_removability_predicate():
    model = PoissonModel(removable=lambda point, config: point.position[0] < 0.5)
    config = Configuration([[0.2, 0.2], [0.7, 0.2]])
    assert model.removable_mask(config).tolist() == [True, False]


def test_strauss_hard_core_above_range_is_rejected():
    with pytest.raises(InvalidParameterError, match="hard core"):
        TwoTypeStrauss(0.1, 0.05, 0.1, hard_core=0.08)


def test_strauss_initial_theta_matches_intensities(unit_window):
    model = TwoTypeStrauss(0.1, 0.1, 0.1)
    config = Configuration([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4]], [1, 1, 1, 2])
    theta = model.initial_theta(config, unit_window)
    assert theta[0] == pytest.approx(-math.log(3 / 0.5))
    assert theta[1] == pytest.approx(-math.log(1 / 0.5))
    assert theta[2:].tolist() == [0.0, 0.0, 0.0]


# -----------------------------------------------------------------------------
# Area interaction
# -----------------------------------------------------------------------------
def test_area_stability_constant():
    model = AreaInteraction(0.1)
    expected = 1.0 + 2.0 * math.pi * 0.01
    assert model.stability_constant([-1.0, -2.0]) == pytest.approx(expected)
    assert model.stability_constant([1.0, 2.0]) == 0.0
    assert model.range == pytest.approx(0.2)


def test_area_model_is_planar():
    model = AreaInteraction(0.1)
    assert model.dimension == 2
    with pytest.raises(InvalidParameterError):
        AreaInteraction(0.0)


def test_lens_area_closed_form():
    assert lens_area(1.0, 1.0) == pytest.approx(2 * math.pi / 3 - math.sqrt(3) / 2)
    assert lens_area(1.0, 2.0) == 0.0
    assert lens_area(1.0, 0.0) == pytest.approx(math.pi)


def test_added_area_single_neighbour():
    value = added_disc_area(1.0, (0.0, 0.0), [[1.0, 0.0]])
    assert value == pytest.approx(math.pi - lens(1.0), abs=1e-6)


def test_added_area_trivial_cases():
    assert added_disc_area(1.0, (0.0, 0.0), np.empty((0, 2))) == pytest.approx(math.pi)
    assert added_disc_area(1.0, (0.0, 0.0), [[2.0, 0.0]]) == pytest.approx(math.pi)
    assert added_disc_area(1.0, (0.0, 0.0), [[0.0, 0.0], [5.0, 5.0]]) == 0.0


@pytest.mark.parametrize("distance", [1.2, 1.5, 1.9])
def test_added_area_disjoint_lenses(distance):
    # neighbours on opposite sides: their discs do not meet, so the lenses add up
    neighbours = [[distance, 0.0], [-distance, 0.0]]
    expected = math.pi - 2 * lens(distance)
    assert added_disc_area(1.0, (0.0, 0.0), neighbours) == pytest.approx(expected, abs=1e-9)


def test_added_area_four_disjoint_lenses():
    neighbours = [[1.5, 0.0], [0.0, 1.5], [-1.5, 0.0], [0.0, -1.5]]
    expected = math.pi - 4 * lens(1.5)
    assert added_disc_area(1.0, (3.0, 3.0), np.asarray(neighbours) + 3.0) == pytest.approx(expected, abs=1e-9)


def test_added_area_exact_matches_grid():
    rng = np.random.default_rng(5)
    for _ in range(3):
        neighbours = rng.uniform(-1.6, 1.6, size=(5, 2))
        exact = added_disc_area(1.0, (0.0, 0.0), neighbours, method="exact")
        grid = added_disc_area(1.0, (0.0, 0.0), neighbours, method="grid", resolution=2 ** -10)
        assert exact == pytest.approx(grid, abs=1e-2)


def test_added_area_is_monotone_in_neighbours():
    neighbours = np.array([[0.5, 0.3], [-0.4, 0.9], [0.2, -1.1]])
    areas = [added_disc_area(1.0, (0.0, 0.0), neighbours[:k]) for k in range(4)]
    assert all(a >= b - 1e-12 for a, b in zip(areas, areas[1:]))


def test_area_sufficient_stats(area):
    config = Configuration([[0.55, 0.5]])
    stats = area.sufficient_stats(MarkedPoint((0.5, 0.5)), config)
    assert stats[0] == 1.0
    assert stats[1] == pytest.approx(math.pi * 0.05 ** 2 - lens_area(0.05, 0.05))


# -----------------------------------------------------------------------------
# Factory
# -----------------------------------------------------------------------------
def test_make_model():
    assert isinstance(make_model("Poisson"), PoissonModel)
    assert isinstance(make_model("strauss2", range11=0.1, range12=0.1, range22=0.1), TwoTypeStrauss)
    assert isinstance(make_model("area", disc_radius=0.1), AreaInteraction)
    with pytest.raises(UnsupportedModelError):
        make_model("lennard-jones")


# -----------------------------------------------------------------------------
# Finite range, translation invariance and local stability
# -----------------------------------------------------------------------------
@pytest.mark.parametrize("model_name", ["strauss", "area"])
def test_points_beyond_range_do_not_change_statistics(model_name, request):
    model = request.getfixturevalue(model_name)
    marks = [1, 1, 2] if model_name == "strauss" else [0, 0, 0]
    config = Configuration([[0.53, 0.5], [0.5, 0.56], [0.45, 0.47]], marks)
    x = MarkedPoint((0.5, 0.5), marks[0])
    far = config.add(MarkedPoint((0.5 + 1.05 * model.range, 0.5), marks[2]))
    assert np.allclose(model.sufficient_stats(x, far), model.sufficient_stats(x, config))


@pytest.mark.parametrize("model_name", ["strauss", "area"])
def test_statistics_are_translation_invariant(model_name, request):
    model = request.getfixturevalue(model_name)
    rng = np.random.default_rng(3)
    mark_set = np.asarray(model.marks)
    config = Configuration(rng.random((40, 2)) * 0.4 + 0.3, rng.choice(mark_set, size=40))
    shift = (3.7, -1.2)
    moved = config.translate(shift)
    for position in ([0.5, 0.5], [0.42, 0.61], [0.33, 0.35]):
        for mark in mark_set:
            x = MarkedPoint(tuple(position), int(mark))
            y = MarkedPoint((position[0] + shift[0], position[1] + shift[1]), int(mark))
            assert np.allclose(model.sufficient_stats(y, moved), model.sufficient_stats(x, config), atol=1e-12)


@pytest.mark.parametrize("model_name,theta", [
    ("strauss", [-2.0, -1.0, 0.5, 0.3, 0.4]),
    ("area", [-1.0, -50.0]),
    ("area", [0.5, 20.0]),
])
def test_local_energy_is_bounded_below(model_name, theta, request):
    model = request.getfixturevalue(model_name)
    bound = -model.stability_constant(theta)
    rng = np.random.default_rng(5)
    mark_set = np.asarray(model.marks)
    for size in (0, 5, 60, 200):
        config = Configuration(rng.random((size, 2)), rng.choice(mark_set, size=size))
        for position in rng.random((10, 2)):
            for mark in mark_set:
                energy = model.local_energy(theta, MarkedPoint(tuple(position), int(mark)), config)
                assert energy >= bound - 1e-12
