"""Maximum pseudolikelihood estimation and the plug-in matrices Ĥ, Ê, Ŵ."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from config.logging_config import PipelineLogger
from core.geometry import CellGrid, Configuration, Cube
from core.models import GibbsModel
from services.quadrature import PatternSummary, QuadratureSpec, summarize_pattern
from services.residuals import TestFunction
from utils.exceptions import DegenerateNormalizationError, FitError, InvalidParameterError

logger = PipelineLogger(__name__)

CONDITION_LIMIT = 1e12
STEP_TOLERANCE = 1e-6
MAX_HALVINGS = 40


@dataclass
class FitResult:
    theta_hat: np.ndarray
    gradient_norm: float
    iterations: int
    hessian_condition: float
    converged: bool
    hessian: Optional[np.ndarray] = None
    log_pseudolikelihood: float = float('nan')
    diagnostic: str = ""
    parameter_names: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            'theta_hat': self.theta_hat.tolist(),
            'parameter_names': list(self.parameter_names),
            'gradient_norm': self.gradient_norm,
            'iterations': self.iterations,
            'hessian_condition': self.hessian_condition,
            'converged': self.converged,
            'log_pseudolikelihood': self.log_pseudolikelihood,
            'hessian': None if self.hessian is None else self.hessian.tolist(),
            'diagnostic': self.diagnostic,
        }


def _summary(config, model, window, quad, grid, summary) -> PatternSummary:
    if summary is not None:
        return summary
    return summarize_pattern(config, model, window, quad, grid)


def _point_stat_sum(summary: PatternSummary) -> np.ndarray:
    return summary.point_stats[summary.removable].sum(axis=0)


def _lpl(summary: PatternSummary, theta: np.ndarray) -> float:
    with np.errstate(over='ignore', invalid='ignore'):
        return float(-summary.node_exp_weights(theta).sum() - theta @ _point_stat_sum(summary))


def _gradient(summary: PatternSummary, theta: np.ndarray) -> np.ndarray:
    weights = summary.node_exp_weights(theta)
    return weights @ summary.node_stats - _point_stat_sum(summary)


def _hessian(summary: PatternSummary, theta: np.ndarray) -> np.ndarray:
    weights = summary.node_exp_weights(theta)
    stats = summary.node_stats
    hessian = -(stats * weights[:, None]).T @ stats
    return 0.5 * (hessian + hessian.T)


def log_pseudolikelihood(config: Configuration, model: GibbsModel, theta, window: Cube,
                         quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                         summary: Optional[PatternSummary] = None) -> float:
    """LPL = −∫ e^{−θᵀv} − θᵀ Σ_x v(x | φ \\ x)."""
    theta = model.check_theta(theta)
    return _lpl(_summary(config, model, window, quad, grid, summary), theta)


def lpl_gradient(config: Configuration, model: GibbsModel, theta, window: Cube,
                 quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                 summary: Optional[PatternSummary] = None) -> np.ndarray:
    theta = model.check_theta(theta)
    return _gradient(_summary(config, model, window, quad, grid, summary), theta)


def lpl_hessian(config: Configuration, model: GibbsModel, theta, window: Cube,
                quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                summary: Optional[PatternSummary] = None) -> np.ndarray:
    theta = model.check_theta(theta)
    return _hessian(_summary(config, model, window, quad, grid, summary), theta)


def lpl_gradient_cells(summary: PatternSummary, theta) -> np.ndarray:
    """LPL gradient restricted to each grid cell, shape ``(n_cells, p)``."""
    weights = summary.node_exp_weights(theta)
    integral, total = summary.cell_sums(summary.node_stats * weights[:, None], summary.point_stats,
                                        summary.removable)
    return integral - total


def _condition(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 1.0
    with np.errstate(divide='ignore', invalid='ignore'):
        return float(np.linalg.cond(matrix))


def fit_mple(config: Configuration, model: GibbsModel, theta0=None, window: Cube = None,
             quad: QuadratureSpec = QuadratureSpec(), tol: float = 1e-9, max_iter: int = 100,
             grid: Optional[CellGrid] = None, summary: Optional[PatternSummary] = None) -> FitResult:
    """Damped projected Newton ascent on the (concave) log-pseudolikelihood.

    Converged means both the projected gradient sup-norm is at most ``tol``
    and the Newton step sup-norm is at most 1e-6.
    """
    if window is None:
        window = summary.region if summary is not None else config.window
    if window is None:
        raise InvalidParameterError("a window is required")
    summary = _summary(config, model, window, quad, grid, summary)
    theta = model.check_theta(model.initial_theta(config, window) if theta0 is None else theta0)
    lower = model.lower_bounds

    converged = False
    condition = 1.0
    gradient_norm = float('inf')
    step_norm = float('inf')
    diagnostic = ""
    iteration = 0
    current = _lpl(summary, theta)

    for iteration in range(1, max_iter + 1):
        gradient = _gradient(summary, theta)
        hessian = _hessian(summary, theta)
        if not np.all(np.isfinite(gradient)) or not np.all(np.isfinite(hessian)):
            raise FitError(f"non-finite pseudolikelihood derivatives at θ = {theta.tolist()}", theta=theta)

        # coordinates pinned at their lower bound with the gradient pushing further down
        free = ~((theta <= lower) & (gradient < 0))
        gradient_norm = float(np.max(np.abs(gradient[free]), initial=0.0))
        curvature = -hessian[np.ix_(free, free)]
        condition = _condition(curvature)
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            raise FitError(f"pseudolikelihood Hessian is singular (condition number {condition:.3e})",
                           condition=condition, theta=theta)

        step = np.zeros_like(theta)
        if free.any():
            step[free] = linalg.solve(curvature, gradient[free], assume_a='sym')
        step_norm = float(np.max(np.abs(step), initial=0.0))
        logger.logger.debug(f"Newton iteration {iteration}: |gradient| = {gradient_norm:.3e}, "
                            f"|step| = {step_norm:.3e}, LPL = {current:.10g}")
        if gradient_norm <= tol and step_norm <= STEP_TOLERANCE:
            converged = True
            break

        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = np.maximum(theta + scale * step, lower)
            value = _lpl(summary, candidate)
            if np.isfinite(value) and value >= current - 1e-12 * max(1.0, abs(current)):
                break
            scale *= 0.5
        else:
            diagnostic = "line search could not increase the log-pseudolikelihood"
            break
        theta, current = candidate, value

    if not converged and not diagnostic:
        if gradient_norm <= tol:
            diagnostic = (f"gradient vanished but the Newton step stays at {step_norm:.3g}: "
                          "the pseudolikelihood has no finite maximizer")
        else:
            diagnostic = f"maximum number of iterations ({max_iter}) reached"

    result = FitResult(
        theta_hat=theta,
        gradient_norm=gradient_norm,
        iterations=iteration,
        hessian_condition=condition,
        converged=converged,
        hessian=_hessian(summary, theta),
        log_pseudolikelihood=current,
        diagnostic=diagnostic,
        parameter_names=model.parameter_names,
    )
    logger.fit_finished(result.iterations, result.gradient_norm, result.converged)
    if diagnostic:
        logger.logger.warning(f"MPLE diagnostic: {diagnostic}")
    return result


def estimate_H_hat(config: Configuration, model: GibbsModel, theta_hat, window: Cube,
                   quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                   summary: Optional[PatternSummary] = None) -> np.ndarray:
    """Ĥ = |Λ|⁻¹ ∫ v vᵀ e^{−θ̂ᵀv}."""
    theta_hat = model.check_theta(theta_hat)
    summary = _summary(config, model, window, quad, grid, summary)
    return -_hessian(summary, theta_hat) / summary.volume


def estimate_E_hat(config: Configuration, model: GibbsModel, theta_hat, h: TestFunction, window: Cube,
                   quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                   summary: Optional[PatternSummary] = None) -> np.ndarray:
    """Ê = |Λ|⁻¹ ∫ h v e^{−θ̂ᵀv}."""
    theta_hat = model.check_theta(theta_hat)
    h.check(model)
    summary = _summary(config, model, window, quad, grid, summary)
    values, _ = h.node_values(summary, theta_hat)
    return (summary.node_weights * values) @ summary.node_stats / summary.volume


def estimate_W_hat(H_hat, E_hat) -> np.ndarray:
    """Ŵ solving Ĥ Ŵ = Ê."""
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=float))
    E_hat = np.asarray(E_hat, dtype=float).reshape(-1)
    condition = _condition(H_hat)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise DegenerateNormalizationError(
            f"Ĥ is singular (condition number {condition:.3e})",
            spectrum=np.linalg.eigvalsh(0.5 * (H_hat + H_hat.T)), condition=condition)
    return linalg.solve(H_hat, E_hat, assume_a='pos')
