"""Goodness-of-fit statistics T₁, T̃₁, T̃₂, their χ² decisions and Monte-Carlo calibration."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import special, stats

from config.logging_config import PipelineLogger
from core.geometry import Configuration, Cube, ObservationDomain, partition_window
from core.models import GibbsModel
from services.covariance import (EIGENVALUE_FLOOR, CovarianceEstimate, cell_innovations, cell_r_infinity,
                                 matrix_inv_sqrt, neighbourhood_sum, resolve_d_vee, resolve_delta,
                                 sigma1_inv_sqrt)
from services.mple import FitResult, estimate_E_hat, estimate_H_hat, estimate_W_hat, fit_mple
from services.quadrature import PatternSummary, QuadratureSpec, summarize_pattern
from services.residuals import LinearStat, Raw, TestFunction, residuals, subdomain_terms
from services.result_buffer import ResultBuffer
from services.sampler import SamplerConfig, simulate
from utils.exceptions import (CalibrationFailure, DegenerateNormalizationError, FitError,
                              InvalidParameterError)

logger = PipelineLogger(__name__)

NORMALIZATION_NOTE = (
    "Residual vectors are normalized by the inverse volume (|Λ₀|⁻¹ for T1 and T1_tilde, |Λ|⁻¹ for "
    "T2_tilde), the scaling under which the residual central limit theorem gives a χ² limit; "
    "square-root volume prefactors are not used."
)

TEST_NAMES = {'t1': 'T1', 't1tilde': 'T1_tilde', 't1_tilde': 'T1_tilde',
              't2tilde': 'T2_tilde', 't2_tilde': 'T2_tilde'}


def normalize_test_name(name: str) -> str:
    key = str(name).strip().lower()
    if key not in TEST_NAMES:
        raise InvalidParameterError(f"unknown test '{name}' (expected t1, t1tilde or t2tilde)")
    return TEST_NAMES[key]


# -- χ² utilities ---------------------------------------------------------------

def chi2_sf(x: float, df: int) -> float:
    """Upper tail of χ²(df) as the regularized upper incomplete gamma Q(df/2, x/2)."""
    if x < 0 or np.isnan(x):
        raise InvalidParameterError(f"χ² statistic must be nonnegative, got {x}")
    if df < 1:
        raise InvalidParameterError(f"degrees of freedom must be positive, got {df}")
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def chi2_quantile(q: float, df: int) -> float:
    return float(stats.chi2.ppf(q, df))


# -- pure statistics ------------------------------------------------------------

def centered_norm_squared(values) -> float:
    """‖R − R̄𝟙‖² = Σ_j (R_j − R̄)²."""
    values = np.asarray(values, dtype=float)
    return float(np.sum((values - values.mean()) ** 2))


def t1_statistic(values, lambda_inn: float, subdomain_volume: float) -> float:
    return centered_norm_squared(values) / (subdomain_volume * lambda_inn)


def t1_tilde_statistic(values, lambda_inn: float, lambda_res: float, subdomain_volume: float) -> float:
    values = np.asarray(values, dtype=float)
    normalized = sigma1_inv_sqrt(lambda_inn, lambda_res, values.shape[0]) @ values
    return float(normalized @ normalized) / subdomain_volume


def t2_tilde_statistic(values, sigma2, volume: float) -> float:
    normalized = matrix_inv_sqrt(sigma2) @ np.asarray(values, dtype=float)
    return float(normalized @ normalized) / volume


# -- reports --------------------------------------------------------------------

@dataclass
class GofReport:
    test: str
    statistic: float
    df: int
    p_value: float
    alpha: float
    reject: bool
    theta_hat: np.ndarray
    covariance: CovarianceEstimate
    normalization_note: str = NORMALIZATION_NOTE
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual_mean: Optional[float] = None
    test_functions: tuple = ()
    fit: Optional[FitResult] = None

    def to_dict(self) -> dict:
        return {
            'test': self.test,
            'statistic': self.statistic,
            'df': self.df,
            'p_value': self.p_value,
            'alpha': self.alpha,
            'critical_value': chi2_quantile(1.0 - self.alpha, self.df),
            'reject': self.reject,
            'theta_hat': np.asarray(self.theta_hat).tolist(),
            'covariance': self.covariance.to_dict(),
            'residuals': np.asarray(self.residuals).tolist(),
            'residual_mean': self.residual_mean,
            'test_functions': list(self.test_functions),
            'fit': None if self.fit is None else self.fit.to_dict(),
            'normalization_note': self.normalization_note,
        }


@dataclass(frozen=True)
class TestSpec:
    """Which statistic to compute and how to grid the window."""

    __test__ = False

    test: str
    functions: tuple
    subdomains: int = 4
    alpha: float = 0.05
    delta: Optional[float] = None
    d_vee: Optional[float] = None
    tol: float = 1e-9
    max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, 'test', normalize_test_name(self.test))
        object.__setattr__(self, 'functions', tuple(self.functions))
        if not self.functions:
            raise InvalidParameterError("a test needs at least one test function")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.test != 'T2_tilde' and self.subdomains < 2:
            raise InvalidParameterError(f"{self.test} needs at least two subdomains, got {self.subdomains}")

    @property
    def df(self) -> int:
        if self.test == 'T1':
            return self.subdomains - 1
        if self.test == 'T1_tilde':
            return self.subdomains
        return len(self.functions)

    def to_dict(self) -> dict:
        return {'test': self.test, 'functions': [repr(h) for h in self.functions], 'subdomains': self.subdomains,
                'alpha': self.alpha, 'delta': self.delta, 'd_vee': self.d_vee, 'df': self.df}


def _as_window(window) -> Cube:
    return window.window if isinstance(window, ObservationDomain) else window


def _fit_on_grid(config, model, window, grid, quad, theta0, tol, max_iter):
    summary = summarize_pattern(config, model, window, quad, grid)
    fit = fit_mple(config, model, theta0, window, quad, tol=tol, max_iter=max_iter, summary=summary)
    if not fit.converged:
        raise FitError(f"MPLE did not converge: {fit.diagnostic}", fit=fit.to_dict())
    return summary, fit


def _refuse_degenerate_function(h: TestFunction, model: GibbsModel) -> None:
    if isinstance(h, LinearStat):
        raise DegenerateNormalizationError(
            f"{h} is linear in the sufficient statistic, so λ_Res = 0 and Σ₂ is singular", spectrum=[0.0])
    if isinstance(h, Raw) and model.constant_combination() is not None:
        raise DegenerateNormalizationError(
            f"raw residuals are a linear statistic for {model.name} (ωᵀv ≡ 1), so λ_Res = 0", spectrum=[0.0])


def _check_lambda(name: str, value: float, reference: float) -> None:
    if not value > EIGENVALUE_FLOOR * max(reference, 0.0) or not value > 0:
        raise DegenerateNormalizationError(f"estimated {name} = {value:.6g} is not positive", spectrum=[value])


def _W_hat(summary: PatternSummary, model, theta_hat, h) -> np.ndarray:
    config, window = summary.config, summary.region
    H_hat = estimate_H_hat(config, model, theta_hat, window, summary=summary)
    E_hat = estimate_E_hat(config, model, theta_hat, h, window, summary=summary)
    return estimate_W_hat(H_hat, E_hat)


def _decide(test: str, statistic: float, df: int, alpha: float) -> tuple:
    p_value = chi2_sf(statistic, df)
    reject = statistic > chi2_quantile(1.0 - alpha, df)
    logger.statistic(test, statistic, df, p_value)
    return p_value, bool(reject)


def test_T1(config: Configuration, model: GibbsModel, h: TestFunction, subdomains: int, window,
            quad: QuadratureSpec = QuadratureSpec(), delta: Optional[float] = None,
            d_vee: Optional[float] = None, alpha: float = 0.05, theta0=None,
            tol: float = 1e-9, max_iter: int = 100) -> GofReport:
    """Quadrat-type test: T₁ = |Λ₀|⁻¹ λ̂_Inn⁻¹ ‖R − R̄𝟙‖² against χ²(|J| − 1)."""
    window = _as_window(window)
    if subdomains < 2:
        raise InvalidParameterError(f"T1 needs at least two subdomains, got {subdomains}")
    h.check(model)
    d_vee = resolve_d_vee(model, d_vee)
    grid = partition_window(window, resolve_delta(model, delta), subdomains)
    summary, fit = _fit_on_grid(config, model, window, grid, quad, theta0, tol, max_iter)

    integral, total, _ = subdomain_terms(summary, fit.theta_hat, h)
    values = integral - total
    lambda_inn = float(neighbourhood_sum(cell_innovations(summary, fit.theta_hat, h), grid, d_vee))
    covariance = CovarianceEstimate(lambda_inn, grid.cell_side, d_vee, grid.n_cells)
    _check_lambda('λ_Inn', lambda_inn, abs(lambda_inn))

    statistic = t1_statistic(values, lambda_inn, grid.subdomain_volume)
    df = subdomains - 1
    p_value, reject = _decide('T1', statistic, df, alpha)
    return GofReport('T1', statistic, df, p_value, alpha, reject, fit.theta_hat, covariance,
                     residuals=values, residual_mean=float(values.mean()), test_functions=(repr(h),), fit=fit)


def test_T1_tilde(config: Configuration, model: GibbsModel, h: TestFunction, subdomains: int, window,
                  quad: QuadratureSpec = QuadratureSpec(), delta: Optional[float] = None,
                  d_vee: Optional[float] = None, alpha: float = 0.05, theta0=None,
                  tol: float = 1e-9, max_iter: int = 100) -> GofReport:
    """T̃₁ = |Λ₀|⁻¹ ‖Σ̂₁^{-1/2} R‖² against χ²(|J|)."""
    window = _as_window(window)
    if subdomains < 2:
        raise InvalidParameterError(f"T1_tilde needs at least two subdomains, got {subdomains}")
    h.check(model)
    _refuse_degenerate_function(h, model)
    d_vee = resolve_d_vee(model, d_vee)
    grid = partition_window(window, resolve_delta(model, delta), subdomains)
    summary, fit = _fit_on_grid(config, model, window, grid, quad, theta0, tol, max_iter)
    theta_hat = fit.theta_hat

    integral, total, _ = subdomain_terms(summary, theta_hat, h)
    values = integral - total
    W_hat = _W_hat(summary, model, theta_hat, h)
    lambda_inn = float(neighbourhood_sum(cell_innovations(summary, theta_hat, h), grid, d_vee))
    lambda_res = float(neighbourhood_sum(cell_r_infinity(summary, theta_hat, h, W_hat), grid, d_vee))
    covariance = CovarianceEstimate(lambda_inn, grid.cell_side, d_vee, grid.n_cells, lambda_res=lambda_res)
    _check_lambda('λ_Inn', lambda_inn, abs(lambda_inn))
    _check_lambda('λ_Res', lambda_res, max(abs(lambda_inn), abs(lambda_res)))

    statistic = t1_tilde_statistic(values, lambda_inn, lambda_res, grid.subdomain_volume)
    df = subdomains
    p_value, reject = _decide('T1_tilde', statistic, df, alpha)
    return GofReport('T1_tilde', statistic, df, p_value, alpha, reject, theta_hat, covariance,
                     residuals=values, residual_mean=float(values.mean()), test_functions=(repr(h),), fit=fit)


def test_T2_tilde(config: Configuration, model: GibbsModel, hs: Sequence[TestFunction], window,
                  quad: QuadratureSpec = QuadratureSpec(), delta: Optional[float] = None,
                  d_vee: Optional[float] = None, alpha: float = 0.05, theta0=None,
                  tol: float = 1e-9, max_iter: int = 100) -> GofReport:
    """T̃₂ = |Λ|⁻¹ ‖Σ̂₂^{-1/2} (R_{h₁}, …, R_{h_s})‖² against χ²(s)."""
    window = _as_window(window)
    hs = list(hs)
    if not hs:
        raise InvalidParameterError("T2_tilde needs at least one test function")
    for h in hs:
        h.check(model)
        _refuse_degenerate_function(h, model)
    d_vee = resolve_d_vee(model, d_vee)
    grid = partition_window(window, resolve_delta(model, delta), 1)
    summary, fit = _fit_on_grid(config, model, window, grid, quad, theta0, tol, max_iter)
    theta_hat = fit.theta_hat

    values = np.array([residuals(config, model, theta_hat, h, window, summary=summary).value for h in hs])
    W_hats = [_W_hat(summary, model, theta_hat, h) for h in hs]
    columns = np.stack([cell_r_infinity(summary, theta_hat, h, W) for h, W in zip(hs, W_hats)], axis=1)
    sigma2 = neighbourhood_sum(columns, grid, d_vee)
    sigma2 = 0.5 * (sigma2 + sigma2.T)
    covariance = CovarianceEstimate(float('nan'), grid.cell_side, d_vee, grid.n_cells, sigma2=sigma2)

    statistic = t2_tilde_statistic(values, sigma2, window.volume)
    df = len(hs)
    p_value, reject = _decide('T2_tilde', statistic, df, alpha)
    return GofReport('T2_tilde', statistic, df, p_value, alpha, reject, theta_hat, covariance,
                     residuals=values, test_functions=tuple(repr(h) for h in hs), fit=fit)


def run_test(config: Configuration, model: GibbsModel, spec: TestSpec, window,
             quad: QuadratureSpec = QuadratureSpec(), theta0=None) -> GofReport:
    options = dict(quad=quad, delta=spec.delta, d_vee=spec.d_vee, alpha=spec.alpha, theta0=theta0,
                   tol=spec.tol, max_iter=spec.max_iter)
    if spec.test == 'T1':
        return test_T1(config, model, spec.functions[0], spec.subdomains, window, **options)
    if spec.test == 'T1_tilde':
        return test_T1_tilde(config, model, spec.functions[0], spec.subdomains, window, **options)
    return test_T2_tilde(config, model, spec.functions, window, **options)


# -- calibration ----------------------------------------------------------------

DEGENERATE_LIMIT = 0.2


@dataclass
class CalibrationResult:
    statistics: np.ndarray
    df: int
    ks_distance: float
    ks_pvalue: float
    degenerate_fraction: float
    rejection_rate: float
    alpha: float
    table: pd.DataFrame

    def to_dict(self) -> dict:
        return {
            'n_valid': int(self.statistics.shape[0]),
            'df': self.df,
            'ks_distance': self.ks_distance,
            'ks_pvalue': self.ks_pvalue,
            'degenerate_fraction': self.degenerate_fraction,
            'rejection_rate': self.rejection_rate,
            'alpha': self.alpha,
            'statistics': self.statistics.tolist(),
        }


def calibrate_null(model: GibbsModel, theta_star, spec: TestSpec, n_replicates: int, seed: int,
                   domain: ObservationDomain, sampler: SamplerConfig = SamplerConfig(),
                   quad: QuadratureSpec = QuadratureSpec(), threads: int = 1,
                   buffer: Optional[ResultBuffer] = None) -> CalibrationResult:
    """Simulate at θ*, refit and test each replicate; compare the statistics to χ²(df)."""
    theta_star = model.check_theta(theta_star)
    if n_replicates < 1:
        raise InvalidParameterError(f"n_replicates must be at least 1, got {n_replicates}")
    if n_replicates < 100:
        logger.logger.warning(f"Only {n_replicates} replicate(s); the KS comparison will have little power")
    buffer = buffer or ResultBuffer()
    buffer.clear_calibration()
    logger.stage_started("null calibration", f"{spec.test}, {n_replicates} replicate(s), seed {seed}")

    def run_replicate(index: int) -> None:
        replicate_seed = seed + index
        pattern = simulate(model, theta_star, domain.extended, replace(sampler, seed=replicate_seed))
        row = {'replicate': index, 'seed': replicate_seed, 'n_points': int(domain.window.contains(pattern.positions).sum())
               if len(pattern) else 0}
        try:
            report = run_test(pattern, model, spec, domain.window, quad, theta0=theta_star)
            row.update(statistic=report.statistic, p_value=report.p_value, reject=report.reject,
                       status='ok', error='')
        except (DegenerateNormalizationError, FitError) as e:
            logger.logger.warning(f"Replicate {index} (seed {replicate_seed}) is degenerate: {e}")
            row.update(statistic=np.nan, p_value=np.nan, reject=False, status='degenerate',
                       error=f"{type(e).__name__}: {e}")
        buffer.add_replicate(row)

    if threads <= 1:
        for index in range(n_replicates):
            run_replicate(index)
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            list(executor.map(run_replicate, range(n_replicates)))

    table = buffer.get_calibration()
    valid = table[table['status'] == 'ok']
    degenerate_fraction = 1.0 - len(valid) / n_replicates
    if degenerate_fraction > DEGENERATE_LIMIT or valid.empty:
        raise CalibrationFailure(
            f"{degenerate_fraction:.0%} of replicates were degenerate (limit {DEGENERATE_LIMIT:.0%})",
            degenerate_fraction=degenerate_fraction,
            errors=table.loc[table['status'] != 'ok', 'error'].head(5).tolist())

    statistics = np.sort(valid['statistic'].to_numpy(dtype=float))
    ks = stats.kstest(statistics, 'chi2', args=(spec.df,))
    rejection_rate = float(valid['reject'].astype(bool).mean())
    logger.logger.info(f"Calibration of {spec.test}: KS distance {ks.statistic:.4f} (p = {ks.pvalue:.4g}), "
                       f"rejection rate {rejection_rate:.3f} at α = {spec.alpha}, "
                       f"{degenerate_fraction:.1%} degenerate")
    return CalibrationResult(statistics, spec.df, float(ks.statistic), float(ks.pvalue), degenerate_fraction,
                             rejection_rate, spec.alpha, table)
