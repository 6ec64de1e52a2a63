import math

import numpy as np
import pytest

from core.geometry import Configuration, partition_window
from core.models import TwoTypeStrauss
from services.quadrature import QuadratureSpec, summarize_pattern
from services.residuals import (Custom, EmptySpace, Inverse, LinearStat, Pearson, Raw, cell_terms, innovations,
                                parse_test_functions, residual_vector_functions, residual_vector_subdomains,
                                residuals)
from services.mple import fit_mple
from utils.exceptions import ConfigError, InvalidParameterError

THETA_PAIR = [0.0, 0.0, 0.5, 0.0, 0.0]


# -----------------------------------------------------------------------------
# Test-function catalogue
# -----------------------------------------------------------------------------
def test_parse_test_functions():
    functions = parse_test_functions("raw + inverse+empty:0.02,0.04+linear:1,0")
    assert functions[:4] == [Raw(), Inverse(), EmptySpace(0.02), EmptySpace(0.04)]
    assert isinstance(functions[4], LinearStat)
    assert functions[4].omega.tolist() == [1.0, 0.0]


@pytest.mark.parametrize("text", ["", "gradient", "empty:", "empty:x"])
def test_parse_test_functions_rejects(text):
    with pytest.raises(ConfigError):
        parse_test_functions(text)


def test_test_function_labels():
    assert repr(Pearson()) == "pearson"
    assert repr(EmptySpace(0.05)) == "empty:0.05"
    with pytest.raises(InvalidParameterError):
        EmptySpace(0.0)
    with pytest.raises(InvalidParameterError):
        LinearStat([0.0, 0.0])


# -----------------------------------------------------------------------------
# Innovations and residuals
# -----------------------------------------------------------------------------
def test_inverse_innovation_closed_form(strauss, strauss_pair, unit_window):
    value = innovations(strauss_pair, strauss, THETA_PAIR, Inverse(), unit_window)
    assert value.integral_term == pytest.approx(1.0, abs=1e-9)
    assert value.sum_term == pytest.approx(2.0 * math.exp(0.5), abs=1e-12)
    assert value.value == pytest.approx(1.0 - 2.0 * math.exp(0.5), abs=1e-9)
    assert value.value == pytest.approx(-2.2974, abs=1e-4)


def test_raw_residual_vanishes_at_poisson_mple(poisson, poisson_pattern, unit_window):
    fit = fit_mple(poisson_pattern, poisson, window=unit_window)
    assert fit.converged
    value = residuals(poisson_pattern, poisson, fit.theta_hat, Raw(), unit_window)
    assert value.sum_term == len(poisson_pattern)
    assert value.value == pytest.approx(0.0, abs=1e-8)


def test_pearson_residual_on_poisson(poisson, poisson_pattern, unit_window):
    value = residuals(poisson_pattern, poisson, [0.4], Pearson(), unit_window)
    assert value.integral_term == pytest.approx(math.exp(-0.2))
    assert value.sum_term == pytest.approx(60 * math.exp(0.2))


def test_empty_space_residual_is_covered_area(poisson, unit_window):
    config = Configuration([[0.5, 0.5]], window=unit_window)
    value = residuals(config, poisson, [0.0], EmptySpace(0.1), unit_window, QuadratureSpec(256))
    # the lone point has no neighbour within r, the integral is the disc area
    assert value.sum_term == 0.0
    assert value.integral_term == pytest.approx(math.pi * 0.01, abs=1e-3)


def test_residual_sums_only_removable_points(unit_domain):
    model = TwoTypeStrauss(0.1, 0.1, 0.1, hard_core=0.015)
    config = Configuration([[0.5, 0.5], [0.51, 0.5], [0.52, 0.5], [0.9, 0.9]], [1, 1, 1, 2],
                           window=unit_domain.extended)
    theta = [0.0, 0.0, 0.0, 0.0, 0.0]
    inn = innovations(config, model, theta, Raw(), unit_domain.window, QuadratureSpec(16))
    res = residuals(config, model, theta, Raw(), unit_domain.window, QuadratureSpec(16))
    assert inn.sum_term == 4.0
    assert res.sum_term == 1.0
    assert inn.integral_term == pytest.approx(res.integral_term)
    assert inn.value - res.value == pytest.approx(-3.0)


def test_subdomain_residuals_add_up(strauss, marked_pattern, unit_domain):
    grid = partition_window(unit_domain.window, 0.1, subdomains=4)
    quad = QuadratureSpec(16)
    values, mean = residual_vector_subdomains(marked_pattern, strauss, THETA_PAIR, Inverse(), grid, quad)
    whole = residuals(marked_pattern, strauss, THETA_PAIR, Inverse(), unit_domain.window, quad, grid)
    assert values.shape == (4,)
    assert values.sum() == pytest.approx(whole.value)
    assert mean == pytest.approx(whole.value / 4)


def test_subdomain_residuals_match_direct_evaluation(strauss, marked_pattern, unit_domain):
    grid = partition_window(unit_domain.window, 0.1, subdomains=4)
    quad = QuadratureSpec(20)
    values, _ = residual_vector_subdomains(marked_pattern, strauss, THETA_PAIR, Pearson(), grid, quad)
    # a 0.5-wide subdomain at resolution 20 gets the same 10 nodes per axis
    direct = residuals(marked_pattern, strauss, THETA_PAIR, Pearson(), grid.subdomain(2), quad)
    assert values[2] == pytest.approx(direct.value, rel=1e-10)


def test_residual_vector_functions(strauss, marked_pattern, unit_domain):
    quad = QuadratureSpec(16)
    hs = [Raw(), Inverse(), EmptySpace(0.05)]
    vector = residual_vector_functions(marked_pattern, strauss, THETA_PAIR, hs, unit_domain.window, quad)
    expected = [residuals(marked_pattern, strauss, THETA_PAIR, h, unit_domain.window, quad).value for h in hs]
    assert vector.tolist() == pytest.approx(expected)


def test_cell_terms_shapes(strauss, marked_pattern, unit_domain):
    grid = partition_window(unit_domain.window, 0.25)
    summary = summarize_pattern(marked_pattern, strauss, unit_domain.window, QuadratureSpec(16), grid)
    integral, total, clamped = cell_terms(summary, THETA_PAIR, Raw())
    assert integral.shape == total.shape == (16,)
    assert clamped == 0
    assert total.sum() == summary.point_index.shape[0]


def test_custom_function_matches_raw(strauss, marked_pattern, unit_domain):
    quad = QuadratureSpec(8)
    custom = Custom(lambda point, config, theta: 1.0, label="one")
    a = residuals(marked_pattern, strauss, THETA_PAIR, custom, unit_domain.window, quad)
    b = residuals(marked_pattern, strauss, THETA_PAIR, Raw(), unit_domain.window, quad)
    assert a.value == pytest.approx(b.value)


def test_linear_stat_length_is_checked(strauss, marked_pattern, unit_domain):
    with pytest.raises(InvalidParameterError, match="length"):
        residuals(marked_pattern, strauss, THETA_PAIR, LinearStat([1.0, 0.0]), unit_domain.window)


def test_huge_energies_are_clamped(poisson, poisson_pattern, unit_window):
    value = residuals(poisson_pattern, poisson, [800.0], Inverse(), unit_window, QuadratureSpec(8))
    assert value.clamped == len(poisson_pattern)
    assert np.isfinite(value.value)


def test_empty_space_is_monotone_in_radius(strauss, marked_pattern, unit_domain):
    grid = partition_window(unit_domain.window, 0.25)
    summary = summarize_pattern(marked_pattern, strauss, unit_domain.window, QuadratureSpec(16), grid)
    radii = [0.01, 0.03, 0.05, 0.1, 0.4]
    at_nodes = [EmptySpace(r).base_at_nodes(summary) for r in radii]
    at_points = [EmptySpace(r).base_at_points(summary) for r in radii]
    terms = [cell_terms(summary, THETA_PAIR, EmptySpace(r)) for r in radii]
    for smaller, larger in zip(range(len(radii) - 1), range(1, len(radii))):
        assert np.all(at_nodes[smaller] <= at_nodes[larger])
        assert np.all(at_points[smaller] <= at_points[larger])
        assert np.all(terms[smaller][0] <= terms[larger][0] + 1e-12)
        assert np.all(terms[smaller][1] <= terms[larger][1] + 1e-12)
    assert at_nodes[0].sum() < at_nodes[-1].sum()
