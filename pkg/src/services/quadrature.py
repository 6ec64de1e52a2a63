"""Stratified midpoint quadrature over Λ × 𝕄 and the per-pattern evaluation cache."""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Optional

import numpy as np

from config.logging_config import PipelineLogger
from core.geometry import CellGrid, Configuration, Cube, MarkedPoint, nearest_distances
from core.models import GibbsModel
from utils.exceptions import InsufficientGuardError, InvalidGridError, QuadratureError

logger = PipelineLogger(__name__)

# g(node positions, node marks, config) -> values at the nodes
Integrand = Callable[[np.ndarray, np.ndarray, Configuration], np.ndarray]


@dataclass(frozen=True)
class QuadratureSpec:
    points_per_unit_length: int = 64
    rule: str = "midpoint"

    def __post_init__(self):
        if int(self.points_per_unit_length) < 1:
            raise InvalidGridError(f"quadrature resolution must be a positive integer, got {self.points_per_unit_length}")
        if self.rule != "midpoint":
            raise InvalidGridError(f"unsupported quadrature rule '{self.rule}'")

    def nodes_per_side(self, side: float, cells_per_side: int = 1) -> int:
        """Nodes per axis, a multiple of ``cells_per_side`` so nodes align with grid cells."""
        per_cell = max(1, math.ceil(self.points_per_unit_length * side / cells_per_side - 1e-9))
        return per_cell * cells_per_side


def _mark_table(marks) -> tuple:
    if marks is None:
        return np.array([0]), np.array([1.0])
    if isinstance(marks, GibbsModel):
        return np.asarray(marks.marks), marks.mark_weights
    if isinstance(marks, Mapping):
        return np.asarray(list(marks.keys())), np.asarray(list(marks.values()), dtype=float)
    marks = np.asarray(marks)
    return marks, np.full(marks.shape[0], 1.0 / marks.shape[0])


def quadrature_nodes(region: Cube, spec: QuadratureSpec, marks=None, cells_per_side: int = 1):
    """Midpoint nodes in lexicographic order, marks outermost.

    Returns ``(positions, node_marks, weights)`` with weights = mark weight × node volume.
    """
    mark_values, mark_weights = _mark_table(marks)
    axes = []
    volume = 1.0
    for lower, upper in zip(region.lower, region.upper):
        count = spec.nodes_per_side(upper - lower, cells_per_side)
        step = (upper - lower) / count
        axes.append(lower + (np.arange(count) + 0.5) * step)
        volume *= step
    grid = np.meshgrid(*axes, indexing='ij')
    positions = np.stack([g.ravel() for g in grid], axis=1)
    n = positions.shape[0]
    return (np.tile(positions, (mark_values.shape[0], 1)),
            np.repeat(mark_values, n),
            np.repeat(mark_weights * volume, n))


def _check_finite(values: np.ndarray, positions: np.ndarray, marks: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise QuadratureError(
            f"integrand is not finite at node {positions[first].tolist()} (mark {int(marks[first])})",
            node=positions[first], mark=int(marks[first]), bad_nodes=int(bad.sum()))


def pointwise(fn: Callable[[MarkedPoint, Configuration], float]) -> Integrand:
    """Lift a per-point ``fn(point, config)`` to the vectorized integrand form."""
    def integrand(positions, marks, config):
        return np.array([fn(MarkedPoint(tuple(p), int(m)), config) for p, m in zip(positions, marks)], dtype=float)
    return integrand


def integrate(g: Integrand, config: Configuration, region: Cube, marks=None,
              spec: QuadratureSpec = QuadratureSpec(), cells_per_side: int = 1) -> float:
    """Σ_m w(m) Σ_nodes g(node^m, φ) · cell volume over a midpoint grid on ``region``.

    ``g(positions, marks, config)`` is vectorized: it receives the ``(n, d)`` node
    positions and the ``(n,)`` node marks and returns ``n`` values. Wrap a per-point
    ``g(MarkedPoint, Configuration)`` with :func:`pointwise`.
    """
    positions, node_marks, weights = quadrature_nodes(region, spec, marks, cells_per_side)
    values = np.asarray(g(positions, node_marks, config), dtype=float).reshape(-1)
    _check_finite(values, positions, node_marks)
    return float(np.dot(weights, values))


class PatternSummary:
    """Sufficient statistics of a pattern at the quadrature nodes and at its points.

    Node statistics are taken against φ and point statistics against φ \\ {x},
    for the points of φ in ``region``. Estimation, residuals and covariance
    estimates are re-weightings of these arrays for a given θ.
    """

    def __init__(self, config: Configuration, model: GibbsModel, region: Cube,
                 spec: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None):
        if config.dimension != region.dimension:
            raise InvalidGridError(f"pattern is {config.dimension}-dimensional but the region is {region.dimension}-dimensional")
        model.check_dimension(region.dimension)
        model.check_marks(config.marks)
        guarded = region.expand(model.range)
        if config.window is not None and not config.window.covers(guarded):
            raise InsufficientGuardError(
                f"observed window {config.window.to_dict()} does not cover region {region.to_dict()} "
                f"with guard {model.range}", region=region.to_dict(), window=config.window.to_dict())
        if grid is not None and not (grid.window.covers(region) and region.covers(grid.window)):
            raise InvalidGridError("grid window does not match the analysis region",
                                   grid=grid.to_dict(), region=region.to_dict())

        self.config = config
        self.model = model
        self.region = region
        self.spec = spec
        self.grid = grid

        cells_per_side = grid.cells_per_side if grid is not None else 1
        self.node_positions, self.node_marks, self.node_weights = quadrature_nodes(
            region, spec, model, cells_per_side)
        self.node_stats, self.node_forbidden = model.evaluate(
            self.node_positions, self.node_marks, config.positions, config.marks)

        inside = region.contains(config.positions) if len(config) else np.zeros(0, dtype=bool)
        self.point_index = np.flatnonzero(inside)
        self.point_positions = config.positions[self.point_index]
        self.point_marks = config.marks[self.point_index]
        self.point_stats, self.point_forbidden = model.evaluate(
            self.point_positions, self.point_marks, config.positions, config.marks, exclude=self.point_index)
        self.removable = model.removable_mask(config)[self.point_index] if len(config) \
            else np.zeros(0, dtype=bool)

        if grid is not None:
            self.node_cells = grid.locate(self.node_positions)
            self.point_cells = grid.locate(self.point_positions)
        else:
            self.node_cells = np.zeros(self.node_positions.shape[0], dtype=np.int64)
            self.point_cells = np.zeros(self.point_index.shape[0], dtype=np.int64)

        logger.logger.debug(f"Summarized {len(self.point_index)} point(s) and {self.node_positions.shape[0]} "
                            f"node(s) on region {region.to_dict()}")

    @property
    def volume(self) -> float:
        return self.region.volume

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells if self.grid is not None else 1

    @cached_property
    def node_distances(self) -> np.ndarray:
        return nearest_distances(self.node_positions, self.config.positions)

    @cached_property
    def point_distances(self) -> np.ndarray:
        return nearest_distances(self.point_positions, self.config.positions, exclude=self.point_index)

    def node_energies(self, theta) -> np.ndarray:
        return self.model.energies(theta, self.node_stats, self.node_forbidden)

    def point_energies(self, theta) -> np.ndarray:
        return self.model.energies(theta, self.point_stats, self.point_forbidden)

    def point_mask(self, removable_only: bool = True) -> np.ndarray:
        return self.removable if removable_only else np.ones(self.point_index.shape[0], dtype=bool)

    def node_exp_weights(self, theta) -> np.ndarray:
        """Node weights times e^{-V}, zero where V = +∞."""
        energy = self.node_energies(theta)
        with np.errstate(over='ignore'):
            values = np.where(np.isfinite(energy), np.exp(-np.where(np.isfinite(energy), energy, 0.0)), 0.0)
        return self.node_weights * values

    def cell_sums(self, node_values: np.ndarray, point_values: np.ndarray, point_mask: np.ndarray):
        """Per-cell integral and point-sum terms; trailing axes of the values are kept."""
        n_cells = self.n_cells
        return (_bincount(self.node_cells, node_values, n_cells),
                _bincount(self.point_cells[point_mask], point_values[point_mask], n_cells))


def _bincount(labels: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(labels, weights=values, minlength=size)[:size]
    return np.stack([np.bincount(labels, weights=values[:, k], minlength=size)[:size]
                     for k in range(values.shape[1])], axis=1)


def summarize_pattern(config: Configuration, model: GibbsModel, region: Cube,
                      spec: QuadratureSpec = QuadratureSpec(), grid: Optional[CellGrid] = None) -> PatternSummary:
    return PatternSummary(config, model, region, spec, grid)
