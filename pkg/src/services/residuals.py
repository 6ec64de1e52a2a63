"""h-innovations and h-residuals for the test-function catalogue."""

from abc import ABC
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from config.logging_config import PipelineLogger
from core.geometry import CellGrid, Configuration, Cube, MarkedPoint
from core.models import GibbsModel
from services.quadrature import PatternSummary, QuadratureSpec, summarize_pattern
from utils.exceptions import ConfigError, InvalidParameterError, QuadratureError

logger = PipelineLogger(__name__)

ENERGY_CLAMP = 700.0


def _energy_power(energy: np.ndarray, power: float):
    """e^{power·V} with V clamped to ±700; returns (values, number of clamped entries)."""
    if power == 0.0:
        return np.ones(np.shape(energy)), 0
    finite = np.isfinite(energy)
    clamped = int(np.count_nonzero(np.abs(np.where(finite, energy, 0.0)) > ENERGY_CLAMP)) \
        + int(np.count_nonzero(~finite))
    safe = np.clip(np.where(finite, energy, ENERGY_CLAMP), -ENERGY_CLAMP, ENERGY_CLAMP)
    return np.exp(power * safe), clamped


class TestFunction(ABC):
    """h(x^m, φ; θ) = base(x^m, φ) · e^{a·V(x^m|φ; θ)}.

    The integrand h·e^{-V} vanishes at hard-core nodes (V = +∞).
    """

    __test__ = False
    energy_power = 0.0
    label = "h"

    def base_at_nodes(self, summary: PatternSummary) -> np.ndarray:
        return np.ones(summary.node_positions.shape[0])

    def base_at_points(self, summary: PatternSummary) -> np.ndarray:
        return np.ones(summary.point_index.shape[0])

    def node_values(self, summary: PatternSummary, theta):
        """h·e^{-V} at every node (without quadrature weights) and the clamp count."""
        energy = np.where(summary.node_forbidden, 0.0, summary.node_energies(theta))
        factor, clamped = _energy_power(energy, self.energy_power - 1.0)
        factor = np.where(summary.node_forbidden, 0.0, factor)
        return self.base_at_nodes(summary) * factor, clamped

    def point_values(self, summary: PatternSummary, theta):
        """h(x, φ \\ x) at every point of the region and the clamp count."""
        if self.energy_power == 0.0:
            return self.base_at_points(summary), 0
        factor, clamped = _energy_power(summary.point_energies(theta), self.energy_power)
        return self.base_at_points(summary) * factor, clamped

    def check(self, model: GibbsModel) -> None:
        pass

    def __repr__(self) -> str:
        return self.label

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.label == other.label

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.label))


class Raw(TestFunction):
    label = "raw"


class Inverse(TestFunction):
    energy_power = 1.0
    label = "inverse"


class Pearson(TestFunction):
    energy_power = 0.5
    label = "pearson"


class EmptySpace(TestFunction):
    """h_r = 𝟙{d(x, φ) ≤ r} · e^{V}."""

    energy_power = 1.0

    def __init__(self, radius: float):
        if not radius > 0:
            raise InvalidParameterError(f"empty-space radius must be positive, got {radius}")
        self.radius = float(radius)
        self.label = f"empty:{self.radius:g}"

    def base_at_nodes(self, summary):
        return (summary.node_distances <= self.radius).astype(float)

    def base_at_points(self, summary):
        return (summary.point_distances <= self.radius).astype(float)

    def check(self, model):
        if self.radius > model.range:
            logger.logger.warning(f"Empty-space radius {self.radius:g} exceeds the interaction range "
                                  f"{model.range:g}; h_r is not local at that range")


class LinearStat(TestFunction):
    """h = ωᵀ v(x^m | φ)."""

    def __init__(self, omega: Sequence[float]):
        self.omega = np.asarray(omega, dtype=float).reshape(-1)
        if not np.any(self.omega != 0):
            raise InvalidParameterError("LinearStat needs a nonzero ω")
        self.label = "linear:" + ",".join(f"{w:g}" for w in self.omega)

    def check(self, model):
        if self.omega.shape != (model.p,):
            raise InvalidParameterError(f"ω has length {self.omega.size}, model statistic has length {model.p}")

    def base_at_nodes(self, summary):
        return summary.node_stats @ self.omega

    def base_at_points(self, summary):
        return summary.point_stats @ self.omega


class Custom(TestFunction):
    """User map ``fn(point, config, theta) -> float``; evaluated point by point."""

    def __init__(self, fn: Callable[[MarkedPoint, Configuration, np.ndarray], float], label: str = "custom"):
        self.fn = fn
        self.label = label

    def node_values(self, summary, theta):
        energy = np.where(summary.node_forbidden, 0.0, summary.node_energies(theta))
        energy_factor, clamped = _energy_power(energy, -1.0)
        energy_factor = np.where(summary.node_forbidden, 0.0, energy_factor)
        values = np.array([self.fn(MarkedPoint(tuple(pos), int(mark)), summary.config, theta)
                           for pos, mark in zip(summary.node_positions, summary.node_marks)], dtype=float)
        return values * energy_factor, clamped

    def point_values(self, summary, theta):
        values = np.array([self.fn(MarkedPoint(tuple(summary.config.positions[i]), int(summary.config.marks[i])),
                                   summary.config.remove(i), theta)
                           for i in summary.point_index], dtype=float)
        return values, 0

    def __eq__(self, other):
        return isinstance(other, Custom) and self.fn is other.fn

    def __hash__(self):
        return hash(id(self.fn))


def parse_test_functions(text: str) -> list:
    """Parse ``raw``, ``inverse``, ``pearson`` or ``empty:r1,r2,...`` joined by ``+``."""
    functions = []
    for token in str(text).split('+'):
        token = token.strip().lower()
        if not token:
            continue
        if token == 'raw':
            functions.append(Raw())
        elif token == 'inverse':
            functions.append(Inverse())
        elif token == 'pearson':
            functions.append(Pearson())
        elif token.startswith('empty:'):
            try:
                radii = [float(r) for r in token[len('empty:'):].split(',') if r.strip()]
            except ValueError as e:
                raise ConfigError(f"malformed empty-space radii in '{token}'") from e
            if not radii:
                raise ConfigError(f"no radius given in '{token}'")
            functions.extend(EmptySpace(r) for r in radii)
        elif token.startswith('linear:'):
            try:
                functions.append(LinearStat([float(w) for w in token[len('linear:'):].split(',') if w.strip()]))
            except ValueError as e:
                raise ConfigError(f"malformed ω in '{token}'") from e
        else:
            raise ConfigError(f"unknown test function '{token}' (expected raw, inverse, pearson, empty:r1,... or linear:w1,...)")
    if not functions:
        raise ConfigError("no test function given")
    return functions


@dataclass
class ResidualValue:
    integral_term: float
    sum_term: float
    region: Cube
    theta_used: np.ndarray
    clamped: int = 0
    value: float = field(init=False)

    def __post_init__(self):
        self.value = self.integral_term - self.sum_term

    def to_dict(self) -> dict:
        return {
            'integral_term': self.integral_term,
            'sum_term': self.sum_term,
            'value': self.value,
            'region': self.region.to_dict(),
            'theta_used': np.asarray(self.theta_used).tolist(),
            'clamped': self.clamped,
        }


def cell_terms(summary: PatternSummary, theta, h: TestFunction, removable_only: bool = True):
    """Integral and sum terms of h on every cell of the summary grid, plus the clamp count."""
    node_values, node_clamped = h.node_values(summary, theta)
    point_values, point_clamped = h.point_values(summary, theta)
    integral, total = summary.cell_sums(summary.node_weights * node_values, point_values,
                                        summary.point_mask(removable_only))
    _check_terms(integral, total, h)
    clamped = node_clamped + point_clamped
    if clamped:
        logger.logger.warning(f"Clamped {clamped} local energies to ±{ENERGY_CLAMP:g} while evaluating {h}")
    return integral, total, clamped


def _check_terms(integral: np.ndarray, total: np.ndarray, h: TestFunction) -> None:
    if not (np.all(np.isfinite(integral)) and np.all(np.isfinite(total))):
        raise QuadratureError(f"non-finite residual terms for test function {h}")


def _summary_for(config, model, region, quad, grid, summary) -> PatternSummary:
    if summary is not None:
        return summary
    return summarize_pattern(config, model, region, quad, grid)


def _region_value(config, model, theta, h, region, quad, grid, summary, removable_only) -> ResidualValue:
    theta = model.check_theta(theta)
    h.check(model)
    summary = _summary_for(config, model, region, quad, grid, summary)
    integral, total, clamped = cell_terms(summary, theta, h, removable_only)
    return ResidualValue(float(integral.sum()), float(total.sum()), summary.region, theta, clamped)


def innovations(config: Configuration, model: GibbsModel, theta, h: TestFunction, region: Cube,
                quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                summary: Optional[PatternSummary] = None) -> ResidualValue:
    """I_Λ = ∫_Λ h·e^{-V} − Σ_{x ∈ φ_Λ} h(x, φ \\ x), at the given (true) θ."""
    return _region_value(config, model, theta, h, region, quad, grid, summary, removable_only=False)


def residuals(config: Configuration, model: GibbsModel, theta_hat, h: TestFunction, region: Cube,
              quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
              summary: Optional[PatternSummary] = None) -> ResidualValue:
    """R_Λ at an estimate θ̂; the point sum ranges over removable points."""
    return _region_value(config, model, theta_hat, h, region, quad, grid, summary, removable_only=True)


def subdomain_terms(summary: PatternSummary, theta, h: TestFunction):
    """Integral and sum terms aggregated per subdomain of the summary grid."""
    integral, total, clamped = cell_terms(summary, theta, h)
    labels = summary.grid.subdomain_of
    size = summary.grid.subdomains
    return (np.bincount(labels, weights=integral, minlength=size),
            np.bincount(labels, weights=total, minlength=size), clamped)


def residual_vector_subdomains(config: Configuration, model: GibbsModel, theta_hat, h: TestFunction,
                               grid: CellGrid, quad: QuadratureSpec = QuadratureSpec(),
                               summary: Optional[PatternSummary] = None):
    """Residuals on each of the |J| subdomains of ``grid`` and their mean R̄."""
    theta_hat = model.check_theta(theta_hat)
    h.check(model)
    summary = _summary_for(config, model, grid.window, quad, grid, summary)
    integral, total, _ = subdomain_terms(summary, theta_hat, h)
    values = integral - total
    return values, float(values.mean())


def residual_vector_functions(config: Configuration, model: GibbsModel, theta_hat,
                              hs: Sequence[TestFunction], region: Cube,
                              quad: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None,
                              summary: Optional[PatternSummary] = None) -> np.ndarray:
    """Residuals of several test functions on one region, sharing one quadrature pass."""
    summary = _summary_for(config, model, region, quad, grid, summary)
    return np.array([residuals(config, model, theta_hat, h, region, summary=summary).value for h in hs])
