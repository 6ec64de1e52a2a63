"""Estimates of λ_Inn, λ_Res and Σ₂ from one pattern, and the χ² normalizations."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from config.logging_config import PipelineLogger
from core.geometry import CellGrid, Configuration, Cube, neighbour_offsets
from core.models import GibbsModel
from services.mple import lpl_gradient_cells
from services.quadrature import PatternSummary, QuadratureSpec, summarize_pattern
from services.residuals import TestFunction, cell_terms
from utils.exceptions import DegenerateNormalizationError, InvalidGridError, InvalidParameterError

logger = PipelineLogger(__name__)

EIGENVALUE_FLOOR = 1e-10


@dataclass
class CovarianceEstimate:
    lambda_inn: float
    delta_n: float
    d_vee: float
    cells_used: int
    lambda_res: Optional[float] = None
    sigma2: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            'lambda_inn': self.lambda_inn,
            'lambda_res': self.lambda_res,
            'sigma2': None if self.sigma2 is None else np.asarray(self.sigma2).tolist(),
            'delta_n': self.delta_n,
            'd_vee': self.d_vee,
            'cells_used': self.cells_used,
        }


def resolve_delta(model: GibbsModel, delta: Optional[float] = None) -> float:
    """Requested cell side; defaults to the interaction range."""
    if delta is None:
        delta = model.range
    if not delta or delta <= 0:
        raise InvalidGridError(f"{model.name} has range {model.range}; give a positive cov.delta")
    return float(delta)


def resolve_d_vee(model: GibbsModel, d_vee: Optional[float] = None) -> float:
    d_vee = model.range if d_vee is None else float(d_vee)
    if d_vee < model.range:
        raise InvalidGridError(f"D∨ = {d_vee} is below the interaction range {model.range}")
    return d_vee


def index_radius(d_vee: float, delta_n: float) -> int:
    """ρ = ⌈D∨ / δ_n⌉, the max-norm index radius of the neighbourhood double sum."""
    if d_vee <= 0:
        return 0
    return int(math.ceil(d_vee / delta_n - 1e-9))


def neighbourhood_sum(values: np.ndarray, grid: CellGrid, d_vee: float):
    """|Λ|⁻¹ Σ_i Σ_{j: |j−i|∞ ≤ ρ} Y_i Y_jᵀ over per-cell values Y (scalars or vectors)."""
    values = np.asarray(values, dtype=float)
    vector = values.ndim == 2
    k = grid.cells_per_side
    field = values.reshape(grid.shape + ((values.shape[1],) if vector else ()))
    radius = index_radius(d_vee, grid.cell_side)
    total = np.zeros((values.shape[1], values.shape[1])) if vector else 0.0
    for offset in neighbour_offsets(radius, grid.dimension):
        if any(abs(o) >= k for o in offset):
            continue
        left = tuple(slice(0, k - o) if o >= 0 else slice(-o, k) for o in offset)
        right = tuple(slice(o, k) if o >= 0 else slice(0, k + o) for o in offset)
        a, b = field[left], field[right]
        if vector:
            total = total + np.einsum('ni,nj->ij', a.reshape(-1, a.shape[-1]), b.reshape(-1, b.shape[-1]))
        else:
            total += float(np.sum(a * b))
    return total / grid.window.volume


def _grid_summary(config, model, grid, quad, summary) -> PatternSummary:
    if summary is not None:
        if summary.grid is None or summary.grid.cells_per_side != grid.cells_per_side \
                or summary.grid.window != grid.window:
            raise InvalidGridError("pattern summary was built on a different grid")
        return summary
    return summarize_pattern(config, model, grid.window, quad, grid)


def cell_innovations(summary: PatternSummary, theta, h: TestFunction) -> np.ndarray:
    """Per-cell h-innovations at θ; the point sums use the removable points."""
    integral, total, _ = cell_terms(summary, theta, h)
    return integral - total


def cell_r_infinity(summary: PatternSummary, theta, h: TestFunction, W_hat) -> np.ndarray:
    """Per-cell R̂_∞ = I_Δ − LPL⁽¹⁾_Δᵀ Ŵ on shared quadrature nodes."""
    return cell_innovations(summary, theta, h) - lpl_gradient_cells(summary, theta) @ np.asarray(W_hat, dtype=float)


def r_infinity_hat(config: Configuration, model: GibbsModel, theta_hat, h: TestFunction, cell: Cube,
                   W_hat, quad: QuadratureSpec = QuadratureSpec()) -> float:
    theta_hat = model.check_theta(theta_hat)
    h.check(model)
    summary = summarize_pattern(config, model, cell, quad)
    return float(cell_r_infinity(summary, theta_hat, h, W_hat)[0])


def lambda_inn_hat(config: Configuration, model: GibbsModel, theta_hat, h: TestFunction, grid: CellGrid,
                   d_vee: Optional[float] = None, quad: QuadratureSpec = QuadratureSpec(),
                   summary: Optional[PatternSummary] = None) -> float:
    theta_hat = model.check_theta(theta_hat)
    h.check(model)
    d_vee = resolve_d_vee(model, d_vee)
    summary = _grid_summary(config, model, grid, quad, summary)
    return float(neighbourhood_sum(cell_innovations(summary, theta_hat, h), grid, d_vee))


def lambda_res_hat(config: Configuration, model: GibbsModel, theta_hat, h: TestFunction, grid: CellGrid,
                   d_vee: Optional[float], W_hat, quad: QuadratureSpec = QuadratureSpec(),
                   summary: Optional[PatternSummary] = None) -> float:
    theta_hat = model.check_theta(theta_hat)
    h.check(model)
    d_vee = resolve_d_vee(model, d_vee)
    summary = _grid_summary(config, model, grid, quad, summary)
    return float(neighbourhood_sum(cell_r_infinity(summary, theta_hat, h, W_hat), grid, d_vee))


def sigma2_hat(config: Configuration, model: GibbsModel, theta_hat, hs: Sequence[TestFunction],
               grid: CellGrid, d_vee: Optional[float], W_hats, quad: QuadratureSpec = QuadratureSpec(),
               summary: Optional[PatternSummary] = None) -> np.ndarray:
    theta_hat = model.check_theta(theta_hat)
    d_vee = resolve_d_vee(model, d_vee)
    summary = _grid_summary(config, model, grid, quad, summary)
    if len(hs) != len(W_hats):
        raise InvalidParameterError(f"{len(hs)} test functions but {len(W_hats)} Ŵ vectors")
    for h in hs:
        h.check(model)
    columns = np.stack([cell_r_infinity(summary, theta_hat, h, W) for h, W in zip(hs, W_hats)], axis=1)
    sigma = neighbourhood_sum(columns, grid, d_vee)
    return 0.5 * (sigma + sigma.T)


def sigma1_inv_sqrt(lambda_inn: float, lambda_res: float, J: int) -> np.ndarray:
    """Σ₁^{-1/2} = λ_Inn^{-1/2} I + |J|⁻¹(λ_Res^{-1/2} − λ_Inn^{-1/2}) 𝟙𝟙ᵀ."""
    if J < 2:
        raise InvalidParameterError(f"Σ₁ needs at least two subdomains, got {J}")
    for name, value in (('λ_Inn', lambda_inn), ('λ_Res', lambda_res)):
        if not value > 0:
            raise DegenerateNormalizationError(f"{name} = {value:.6g} is not positive", spectrum=[value],
                                               eigenvalue=name)
    inn = lambda_inn ** -0.5
    res = lambda_res ** -0.5
    return inn * np.eye(J) + (res - inn) / J * np.ones((J, J))


def matrix_inv_sqrt(matrix) -> np.ndarray:
    """Symmetric B with B A B = I, refusing eigenvalues below 1e-10 × the largest."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    largest = float(eigenvalues.max()) if eigenvalues.size else 0.0
    if largest <= 0 or eigenvalues.min() <= EIGENVALUE_FLOOR * largest:
        raise DegenerateNormalizationError(
            f"matrix is not positive definite above {EIGENVALUE_FLOOR:g} × its largest eigenvalue",
            spectrum=eigenvalues)
    inverse_root = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T
    return 0.5 * (inverse_root + inverse_root.T)
