import math

import numpy as np
import pytest
from scipy import stats

import services.gof as gof
from core.geometry import Configuration, ObservationDomain, partition_window
from core.models import AreaInteraction, PoissonModel
from services.quadrature import QuadratureSpec
from services.residuals import EmptySpace, Inverse, LinearStat, Raw
from services.result_buffer import ResultBuffer
from services.sampler import SamplerConfig, sample_poisson
from utils.exceptions import CalibrationFailure, DegenerateNormalizationError, InvalidParameterError


@pytest.fixture
def area_pattern(unit_domain):
    return sample_poisson(unit_domain.extended, 150.0, seed=2)


# -----------------------------------------------------------------------------
# χ² utilities and pure statistics
# -----------------------------------------------------------------------------
def test_chi2_sf_reference_value():
    assert gof.chi2_sf(3.8415, 1) == pytest.approx(0.05, abs=1e-4)
    assert gof.chi2_sf(0.0, 3) == pytest.approx(1.0)


@pytest.mark.parametrize("x, df", [(0.5, 1), (4.0, 3), (12.0, 8), (30.0, 16)])
def test_chi2_sf_matches_scipy(x, df):
    assert gof.chi2_sf(x, df) == pytest.approx(stats.chi2.sf(x, df), rel=1e-10)


def test_chi2_sf_rejects():
    with pytest.raises(InvalidParameterError):
        gof.chi2_sf(-1.0, 2)
    with pytest.raises(InvalidParameterError):
        gof.chi2_sf(1.0, 0)


def test_pure_statistics():
    assert gof.centered_norm_squared([1.0, 2.0, 3.0]) == pytest.approx(2.0)
    assert gof.t1_statistic([1.0, 2.0, 3.0], 2.0, 0.5) == pytest.approx(2.0)
    # with λ_Inn = λ_Res the normalization is a plain scaling
    values = np.array([0.3, -0.1, 0.4, 0.2])
    assert gof.t1_tilde_statistic(values, 2.0, 2.0, 0.25) == pytest.approx(values @ values / 2.0 / 0.25)
    assert gof.t2_tilde_statistic(values[:2], np.diag([4.0, 1.0]), 2.0) == pytest.approx(
        (0.3 ** 2 / 4 + 0.1 ** 2) / 2.0)


def test_t1_tilde_separates_mean_and_contrasts():
    # Σ₁^{-1/2} scales the mean direction by λ_Res^{-1/2} and contrasts by λ_Inn^{-1/2}
    values = np.array([1.0, 1.0, 1.0, 1.0])
    assert gof.t1_tilde_statistic(values, 9.0, 0.25, 1.0) == pytest.approx(4.0 / 0.25)
    contrast = np.array([1.0, -1.0, 1.0, -1.0])
    assert gof.t1_tilde_statistic(contrast, 9.0, 0.25, 1.0) == pytest.approx(4.0 / 9.0)


def test_test_spec():
    spec = gof.TestSpec('t1', (Raw(),), subdomains=9)
    assert spec.test == 'T1' and spec.df == 8
    assert gof.TestSpec('t1tilde', (Inverse(),), subdomains=4).df == 4
    assert gof.TestSpec('t2tilde', (EmptySpace(0.01), EmptySpace(0.02), EmptySpace(0.03)), subdomains=1).df == 3
    with pytest.raises(InvalidParameterError):
        gof.TestSpec('t1', (Raw(),), alpha=1.5)
    with pytest.raises(InvalidParameterError):
        gof.TestSpec('t3', (Raw(),))
    with pytest.raises(InvalidParameterError):
        gof.TestSpec('t1', (Raw(),), subdomains=1)


# -----------------------------------------------------------------------------
# T1
# -----------------------------------------------------------------------------
def test_T1_reduces_to_quadrat_counts(poisson, poisson_pattern, unit_window):
    report = gof.test_T1(poisson_pattern, poisson, Raw(), 4, unit_window, QuadratureSpec(20), delta=0.1)
    grid = partition_window(unit_window, 0.1, subdomains=4)
    counts = np.bincount(grid.subdomain_of[grid.locate(poisson_pattern.positions)], minlength=4)
    squares = float(np.sum((counts - counts.mean()) ** 2))
    assert gof.centered_norm_squared(report.residuals) == pytest.approx(squares, rel=1e-9)
    assert report.statistic * report.covariance.lambda_inn * 0.25 == pytest.approx(squares, rel=1e-9)
    assert report.df == 3
    assert report.p_value == pytest.approx(stats.chi2.sf(report.statistic, 3), rel=1e-9)
    assert report.reject == (report.statistic > stats.chi2.ppf(0.95, 3))


def test_T1_report_serializes(poisson, poisson_pattern, unit_window):
    report = gof.test_T1(poisson_pattern, poisson, Raw(), 4, unit_window, QuadratureSpec(20), delta=0.1)
    payload = report.to_dict()
    assert payload['test'] == 'T1'
    assert payload['critical_value'] == pytest.approx(stats.chi2.ppf(0.95, 3))
    assert len(payload['residuals']) == 4
    assert payload['fit']['converged'] is True
    assert 'normalization_note' in payload


def test_T1_on_strauss(strauss, marked_pattern, unit_domain):
    report = gof.test_T1(marked_pattern, strauss, Inverse(), 4, unit_domain, QuadratureSpec(20))
    assert report.df == 3
    assert report.statistic >= 0.0
    assert 0.0 <= report.p_value <= 1.0
    assert report.covariance.delta_n == pytest.approx(0.1)


def test_t1_statistic_ignores_subdomain_order():
    values = np.array([0.7, -1.2, 0.4, 2.5, -0.3, 0.9, 0.0, -0.8, 1.1])
    reference = gof.t1_statistic(values, 1.7, 1.0 / 9)
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert gof.t1_statistic(values[rng.permutation(9)], 1.7, 1.0 / 9) == pytest.approx(reference, rel=1e-12)


def test_T1_is_invariant_under_subdomain_relabelling(strauss, marked_pattern, unit_domain):
    # the mirror image x -> 1 - x maps subdomain (i, j) onto (1 - i, j)
    mirrored = marked_pattern.positions.copy()
    mirrored[:, 0] = 1.0 - mirrored[:, 0]
    reflected = Configuration(mirrored, marked_pattern.marks, window=unit_domain.extended)
    report = gof.test_T1(marked_pattern, strauss, Inverse(), 4, unit_domain, QuadratureSpec(20))
    relabelled = gof.test_T1(reflected, strauss, Inverse(), 4, unit_domain, QuadratureSpec(20))
    assert relabelled.residuals == pytest.approx(report.residuals[[2, 3, 0, 1]], rel=1e-6, abs=1e-9)
    assert relabelled.statistic == pytest.approx(report.statistic, rel=1e-6)
    assert relabelled.p_value == pytest.approx(report.p_value, rel=1e-6, abs=1e-12)


# -----------------------------------------------------------------------------
# T̃1 / T̃2
# -----------------------------------------------------------------------------
def test_T1_tilde_refuses_linear_statistics(poisson, poisson_pattern, unit_window):
    with pytest.raises(DegenerateNormalizationError):
        gof.test_T1_tilde(poisson_pattern, poisson, Raw(), 4, unit_window, delta=0.1)
    with pytest.raises(DegenerateNormalizationError):
        gof.test_T1_tilde(poisson_pattern, poisson, LinearStat([1.0]), 4, unit_window, delta=0.1)


def test_T1_tilde_detects_vanishing_lambda_res(poisson, poisson_pattern, unit_window):
    # for a Poisson fit e^{V} is constant, so the inverse residual is a multiple of the raw one
    with pytest.raises(DegenerateNormalizationError, match="λ_Res"):
        gof.test_T1_tilde(poisson_pattern, poisson, Inverse(), 4, unit_window, QuadratureSpec(20), delta=0.1)


def test_T1_tilde_on_strauss(strauss, marked_pattern, unit_domain):
    report = gof.test_T1_tilde(marked_pattern, strauss, Inverse(), 4, unit_domain, QuadratureSpec(20))
    assert report.test == 'T1_tilde'
    assert report.df == 4
    assert report.covariance.lambda_res > 0
    assert np.isfinite(report.statistic) and report.statistic >= 0.0


def test_T2_tilde_on_area_interaction(area_pattern, unit_domain):
    model = AreaInteraction(0.05)
    hs = [EmptySpace(0.03), EmptySpace(0.06)]
    report = gof.test_T2_tilde(area_pattern, model, hs, unit_domain, QuadratureSpec(20))
    assert report.df == 2
    assert report.covariance.sigma2.shape == (2, 2)
    assert np.all(np.linalg.eigvalsh(report.covariance.sigma2) > 0)
    assert report.test_functions == ('empty:0.03', 'empty:0.06')


def test_run_test_dispatch(poisson, poisson_pattern, unit_window):
    spec = gof.TestSpec('t1', (Raw(),), subdomains=4, delta=0.1)
    report = gof.run_test(poisson_pattern, poisson, spec, unit_window, QuadratureSpec(20))
    assert report.test == 'T1'


# -----------------------------------------------------------------------------
# Calibration
# -----------------------------------------------------------------------------
def test_calibrate_null_small_run():
    model = PoissonModel()
    domain = ObservationDomain((0.5, 0.5), 1.0)
    spec = gof.TestSpec('t1', (Raw(),), subdomains=4, delta=0.25)
    buffer = ResultBuffer()
    result = gof.calibrate_null(model, [-math.log(50.0)], spec, 6, 10, domain, SamplerConfig(),
                                QuadratureSpec(16), buffer=buffer)
    assert result.statistics.shape == (6,)
    assert result.df == 3
    assert 0.0 <= result.ks_pvalue <= 1.0
    assert result.degenerate_fraction == 0.0
    assert result.table['seed'].tolist() == list(range(10, 16))
    assert len(buffer) == 6


def test_calibrate_null_threads_are_deterministic():
    model = PoissonModel()
    domain = ObservationDomain((0.5, 0.5), 1.0)
    spec = gof.TestSpec('t1', (Raw(),), subdomains=4, delta=0.25)
    serial = gof.calibrate_null(model, [-math.log(50.0)], spec, 4, 0, domain, quad=QuadratureSpec(16))
    threaded = gof.calibrate_null(model, [-math.log(50.0)], spec, 4, 0, domain, quad=QuadratureSpec(16), threads=2)
    assert serial.table['statistic'].tolist() == pytest.approx(threaded.table['statistic'].tolist())


def test_calibrate_null_fails_when_degenerate():
    model = PoissonModel()
    domain = ObservationDomain((0.5, 0.5), 1.0)
    spec = gof.TestSpec('t1tilde', (Raw(),), subdomains=4, delta=0.25)
    buffer = ResultBuffer()
    with pytest.raises(CalibrationFailure):
        gof.calibrate_null(model, [-math.log(50.0)], spec, 3, 0, domain, quad=QuadratureSpec(16), buffer=buffer)
    table = buffer.get_calibration()
    assert table['status'].tolist() == ['degenerate'] * 3
