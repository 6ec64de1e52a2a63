"""Exponential-family Gibbs models: V(x^m | φ; θ) = θᵀ v(x^m | φ)."""

import math
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np

from core.geometry import (Configuration, Cube, MarkedPoint, count_within,
                           neighbour_lists)
from utils.exceptions import (InvalidMarkError, InvalidParameterError,
                              UnsupportedModelError)

RemovabilityPredicate = Callable[[MarkedPoint, Configuration], bool]


class GibbsModel(ABC):
    """Finite-range, locally stable exponential-family model on a finite mark set."""

    name = "gibbs"
    hereditary = True

    def __init__(self, marks: Sequence[int], mark_weights: Optional[Sequence[float]] = None,
                 removable: Optional[RemovabilityPredicate] = None, dimension: Optional[int] = None):
        self.marks = tuple(int(m) for m in marks)
        if mark_weights is None:
            mark_weights = np.full(len(self.marks), 1.0 / len(self.marks))
        self.mark_weights = np.asarray(mark_weights, dtype=float)
        if self.mark_weights.shape != (len(self.marks),) or np.any(self.mark_weights <= 0) \
                or abs(self.mark_weights.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"mark weights {list(self.mark_weights)} must be positive and sum to 1")
        self.removable_predicate = removable
        self.dimension = dimension

    # -- parameters -----------------------------------------------------------

    @property
    @abstractmethod
    def parameter_names(self) -> tuple:
        ...

    @property
    def p(self) -> int:
        return len(self.parameter_names)

    @property
    @abstractmethod
    def range(self) -> float:
        ...

    @property
    def lower_bounds(self) -> np.ndarray:
        return np.full(self.p, -np.inf)

    def admissible(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return theta.shape == (self.p,) and bool(np.all(np.isfinite(theta))) \
            and bool(np.all(theta >= self.lower_bounds))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.p,):
            raise InvalidParameterError(
                f"{self.name} expects {self.p} parameters {self.parameter_names}, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise InvalidParameterError(f"parameters must be finite, got {theta.tolist()}")
        below = theta < self.lower_bounds
        if np.any(below):
            names = [n for n, b in zip(self.parameter_names, below) if b]
            raise InvalidParameterError(f"parameters {names} are outside the admissible set of {self.name}",
                                        theta=theta)
        return theta

    def check_marks(self, marks) -> None:
        marks = np.asarray(marks)
        unknown = np.setdiff1d(np.unique(marks), np.asarray(self.marks))
        if unknown.size:
            raise InvalidMarkError(f"marks {unknown.tolist()} are not in the mark set {list(self.marks)} of {self.name}")

    def check_dimension(self, dimension: int) -> None:
        if self.dimension is not None and dimension != self.dimension:
            raise UnsupportedModelError(f"{self.name} is only defined in dimension {self.dimension}")

    # -- statistics -----------------------------------------------------------

    @abstractmethod
    def evaluate(self, query_positions, query_marks, positions, marks, exclude=None):
        """Sufficient statistics of each query point against the pattern ``(positions, marks)``.

        ``exclude[i]`` is the index of the query's own point in the pattern, or -1.
        Returns ``(stats, forbidden)``: an ``(n, p)`` array and a hard-core mask.
        """

    def sufficient_stats(self, x: MarkedPoint, config: Configuration) -> np.ndarray:
        self.check_marks([x.mark])
        stats, _ = self.evaluate(np.asarray(x.position)[None, :], np.asarray([x.mark]),
                                 config.positions, config.marks)
        return stats[0]

    def local_energy(self, theta, x: MarkedPoint, config: Configuration) -> float:
        theta = self.check_theta(theta)
        self.check_marks([x.mark])
        stats, forbidden = self.evaluate(np.asarray(x.position)[None, :], np.asarray([x.mark]),
                                         config.positions, config.marks)
        return float(self.energies(theta, stats, forbidden)[0])

    def energies(self, theta, stats: np.ndarray, forbidden: np.ndarray) -> np.ndarray:
        energy = stats @ np.asarray(theta, dtype=float)
        return np.where(forbidden, np.inf, energy)

    @abstractmethod
    def stability_constant(self, theta) -> float:
        ...

    def activity_bound(self, theta) -> float:
        """Largest one-point activity e^{-θ₁^m}; bounds the non-interacting intensity."""
        return 1.0

    # -- removability ---------------------------------------------------------

    def removable_mask(self, config: Configuration) -> np.ndarray:
        if self.removable_predicate is not None:
            return np.fromiter((bool(self.removable_predicate(point, config)) for point in config),
                               dtype=bool, count=len(config))
        return self._removable_mask(config)

    def _removable_mask(self, config: Configuration) -> np.ndarray:
        return np.ones(len(config), dtype=bool)

    def removable_points(self, config: Configuration, region: Cube) -> Configuration:
        mask = self.removable_mask(config) & region.contains(config.positions) if len(config) \
            else np.zeros(0, dtype=bool)
        return Configuration._trusted(config.positions[mask], config.marks[mask], region)

    # -- helpers used by estimation -------------------------------------------

    def constant_combination(self) -> Optional[np.ndarray]:
        """ω with ωᵀv ≡ 1, when the statistic contains the constant."""
        return None

    def initial_theta(self, config: Configuration, window: Cube) -> np.ndarray:
        return np.clip(np.zeros(self.p), self.lower_bounds, None)

    def _log_intensity_start(self, count: int, volume: float) -> float:
        return -math.log(max(count, 1) / volume)

    def to_dict(self) -> dict:
        return {'model': self.name, 'marks': list(self.marks), 'mark_weights': self.mark_weights.tolist(),
                'range': self.range, 'parameters': list(self.parameter_names)}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(range={self.range}, marks={self.marks})"


class PoissonModel(GibbsModel):
    """Homogeneous marked Poisson process, v ≡ 1."""

    name = "poisson"

    def __init__(self, marks: Sequence[int] = (0,), mark_weights=None, removable=None, dimension=None):
        super().__init__(marks, mark_weights, removable, dimension)

    @property
    def parameter_names(self) -> tuple:
        return ('theta1',)

    @property
    def range(self) -> float:
        return 0.0

    def evaluate(self, query_positions, query_marks, positions, marks, exclude=None):
        n = np.asarray(query_marks).reshape(-1).shape[0]
        return np.ones((n, 1)), np.zeros(n, dtype=bool)

    def stability_constant(self, theta) -> float:
        theta = self.check_theta(theta)
        return max(0.0, -float(theta[0]))

    def activity_bound(self, theta) -> float:
        return math.exp(max(0.0, -float(theta[0])))

    def constant_combination(self) -> np.ndarray:
        return np.ones(1)

    def initial_theta(self, config, window) -> np.ndarray:
        return np.array([self._log_intensity_start(len(config.restrict(window)), window.volume)])


class TwoTypeStrauss(GibbsModel):
    """Two-type Strauss model with marks {1, 2}.

    θ = (θ₁¹, θ₁², θ₂¹¹, θ₂¹², θ₂²²). Pair statistics count neighbours of each
    mark at distance in [hard_core, D^{m m'}]. Without hard core (the inhibition
    case) the pair parameters must be nonnegative; with a hard core δ > 0 any
    point closer than δ to another makes the local energy infinite.
    """

    name = "strauss2"

    def __init__(self, range11: float, range12: float, range22: float, hard_core: float = 0.0,
                 mark_weights=None, removable=None, dimension=None):
        super().__init__((1, 2), mark_weights, removable, dimension)
        self.ranges = {(1, 1): float(range11), (1, 2): float(range12), (2, 2): float(range22)}
        self.hard_core = float(hard_core)
        if any(r < 0 for r in self.ranges.values()):
            raise InvalidParameterError(f"interaction ranges must be nonnegative: {self.ranges}")
        if self.hard_core < 0 or (self.hard_core > 0 and self.hard_core > min(self.ranges.values())):
            raise InvalidParameterError(
                f"hard core {self.hard_core} must lie in [0, min range {min(self.ranges.values())}]")
        self.hereditary = True

    @property
    def parameter_names(self) -> tuple:
        return ('theta1_1', 'theta1_2', 'theta2_11', 'theta2_12', 'theta2_22')

    @property
    def range(self) -> float:
        return max(self.ranges.values())

    @property
    def lower_bounds(self) -> np.ndarray:
        if self.hard_core > 0:
            return np.full(5, -np.inf)
        return np.array([-np.inf, -np.inf, 0.0, 0.0, 0.0])

    def _pair_range(self, a: int, b: int) -> float:
        return self.ranges[(min(a, b), max(a, b))]

    def evaluate(self, query_positions, query_marks, positions, marks, exclude=None):
        query_positions = np.atleast_2d(np.asarray(query_positions, dtype=float))
        query_marks = np.asarray(query_marks).reshape(-1)
        positions = np.asarray(positions, dtype=float)
        marks = np.asarray(marks).reshape(-1)
        n = query_marks.shape[0]
        stats = np.zeros((n, 5))
        forbidden = np.zeros(n, dtype=bool)
        if n == 0:
            return stats, forbidden
        exclude = np.full(n, -1) if exclude is None else np.asarray(exclude)

        stats[:, 0] = query_marks == 1
        stats[:, 1] = query_marks == 2

        # (query mark, neighbour mark) -> statistic column
        columns = {(1, 1): 2, (1, 2): 3, (2, 1): 3, (2, 2): 4}
        for neighbour_mark in (1, 2):
            members = np.flatnonzero(marks == neighbour_mark)
            if members.size == 0:
                continue
            # map excluded pattern indices into this mark's member list
            local = np.full(n, -1)
            own = exclude >= 0
            if np.any(own):
                position_in_members = np.searchsorted(members, exclude[own])
                position_in_members = np.clip(position_in_members, 0, members.size - 1)
                hit = members[position_in_members] == exclude[own]
                local[np.flatnonzero(own)[hit]] = position_in_members[hit]
            for query_mark in (1, 2):
                rows = np.flatnonzero(query_marks == query_mark)
                if rows.size == 0:
                    continue
                radius = self._pair_range(query_mark, neighbour_mark)
                counts = count_within(query_positions[rows], positions[members], radius, exclude=local[rows])
                if self.hard_core > 0:
                    counts = counts - count_within(query_positions[rows], positions[members], self.hard_core,
                                                   exclude=local[rows], strict=True)
                stats[rows, columns[(query_mark, neighbour_mark)]] += counts

        if self.hard_core > 0:
            forbidden = count_within(query_positions, positions, self.hard_core, exclude=exclude, strict=True) > 0
        return stats, forbidden

    def stability_constant(self, theta) -> float:
        theta = self.check_theta(theta)
        base = max(0.0, -float(min(theta[0], theta[1])))
        if self.hard_core <= 0:
            return base
        # packing bound on the number of δ-separated points within distance D
        dimension = self.dimension or 2

        def packing(radius: float) -> float:
            return ((2.0 * radius + self.hard_core) / self.hard_core) ** dimension

        worst = 0.0
        for mark, (same, cross) in ((1, (2, 3)), (2, (4, 3))):
            same_range = self._pair_range(mark, mark)
            cross_range = self._pair_range(1, 2)
            worst = max(worst, max(0.0, -theta[same]) * packing(same_range)
                        + max(0.0, -theta[cross]) * packing(cross_range))
        return base + worst

    def activity_bound(self, theta) -> float:
        return math.exp(max(0.0, -float(min(theta[0], theta[1]))))

    def _removable_mask(self, config: Configuration) -> np.ndarray:
        n = len(config)
        if self.hard_core <= 0 or n < 2:
            return np.ones(n, dtype=bool)
        close = neighbour_lists(config.positions, config.positions, self.hard_core,
                                exclude=np.arange(n), strict=True)
        violators = [i for i in range(n) if close[i].size]
        if not violators:
            return np.ones(n, dtype=bool)
        # x is removable iff every violating pair involves x
        violating_pairs = {(min(i, j), max(i, j)) for i in violators for j in close[i]}
        mask = np.zeros(n, dtype=bool)
        for i in violators:
            mask[i] = all(i in pair for pair in violating_pairs)
        return mask

    def constant_combination(self) -> np.ndarray:
        return np.array([1.0, 1.0, 0.0, 0.0, 0.0])

    def initial_theta(self, config, window) -> np.ndarray:
        inside = config.restrict(window)
        theta = np.zeros(5)
        for column, mark, weight in ((0, 1, self.mark_weights[0]), (1, 2, self.mark_weights[1])):
            theta[column] = self._log_intensity_start(int(np.sum(inside.marks == mark)), window.volume * weight)
        return theta

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload.update({'range11': self.ranges[(1, 1)], 'range12': self.ranges[(1, 2)],
                        'range22': self.ranges[(2, 2)], 'hard_core': self.hard_core})
        return payload


class AreaInteraction(GibbsModel):
    """Area-interaction model in the plane: v(x | φ) = (1, |B(x,R) \\ ∪_{y∈φ} B(y,R)|)."""

    name = "area"

    def __init__(self, disc_radius: float, method: str = "exact", resolution: float = 2 ** -10,
                 removable=None):
        super().__init__((0,), None, removable, dimension=2)
        if disc_radius <= 0:
            raise InvalidParameterError(f"disc radius must be positive, got {disc_radius}")
        if method not in ("exact", "grid"):
            raise InvalidParameterError(f"unknown disc area method '{method}'")
        self.disc_radius = float(disc_radius)
        self.method = method
        self.resolution = float(resolution)

    @property
    def parameter_names(self) -> tuple:
        return ('theta1', 'theta2')

    @property
    def range(self) -> float:
        return 2.0 * self.disc_radius

    def evaluate(self, query_positions, query_marks, positions, marks, exclude=None):
        query_positions = np.atleast_2d(np.asarray(query_positions, dtype=float))
        n = np.asarray(query_marks).reshape(-1).shape[0]
        stats = np.zeros((n, 2))
        if n == 0:
            return stats, np.zeros(0, dtype=bool)
        positions = np.asarray(positions, dtype=float)
        stats[:, 0] = 1.0
        neighbours = neighbour_lists(query_positions, positions, self.range, exclude=exclude, strict=True)
        for i, found in enumerate(neighbours):
            stats[i, 1] = added_disc_area(self.disc_radius, query_positions[i], positions[found],
                                          method=self.method, resolution=self.resolution)
        return stats, np.zeros(n, dtype=bool)

    def stability_constant(self, theta) -> float:
        theta = self.check_theta(theta)
        return max(0.0, -float(theta[0])) + max(0.0, -float(theta[1])) * math.pi * self.disc_radius ** 2

    def activity_bound(self, theta) -> float:
        return math.exp(self.stability_constant(theta))

    def constant_combination(self) -> np.ndarray:
        return np.array([1.0, 0.0])

    def initial_theta(self, config, window) -> np.ndarray:
        return np.array([self._log_intensity_start(len(config.restrict(window)), window.volume), 0.0])

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload.update({'disc_radius': self.disc_radius, 'area_method': self.method})
        return payload


# -- added disc area ------------------------------------------------------------

TWO_PI = 2.0 * math.pi


def lens_area(radius: float, distance: float) -> float:
    """Area of the intersection of two discs of equal radius at the given centre distance."""
    if distance >= 2.0 * radius:
        return 0.0
    return 2.0 * radius ** 2 * math.acos(distance / (2.0 * radius)) \
        - 0.5 * distance * math.sqrt(4.0 * radius ** 2 - distance ** 2)


def _split_interval(start: float, end: float) -> list:
    """Normalise an angular interval to pieces inside [0, 2π)."""
    width = end - start
    if width >= TWO_PI:
        return [(0.0, TWO_PI)]
    start = start % TWO_PI
    end = start + width
    if end <= TWO_PI:
        return [(start, end)]
    return [(start, TWO_PI), (0.0, end - TWO_PI)]


def _subtract_intervals(base: list, covering: list) -> list:
    covering = sorted(covering)
    merged = []
    for a, b in covering:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    free = []
    for a, b in base:
        cursor = a
        for ca, cb in merged:
            if cb <= cursor or ca >= b:
                continue
            if ca > cursor:
                free.append((cursor, ca))
            cursor = max(cursor, cb)
            if cursor >= b:
                break
        if cursor < b:
            free.append((cursor, b))
    return free


def _arc_integral(radius: float, center: np.ndarray, start: float, end: float) -> float:
    # ½∮(x dy − y dx) along a counter-clockwise arc of the circle (center, radius)
    return 0.5 * (radius ** 2 * (end - start)
                  + radius * center[0] * (math.sin(end) - math.sin(start))
                  - radius * center[1] * (math.cos(end) - math.cos(start)))


def _covered_arc(radius: float, center: np.ndarray, other: np.ndarray) -> list:
    """Angles of the circle around ``center`` lying inside the disc around ``other``."""
    offset = other - center
    distance = math.hypot(offset[0], offset[1])
    half_width = math.acos(min(1.0, distance / (2.0 * radius)))
    direction = math.atan2(offset[1], offset[0])
    return _split_interval(direction - half_width, direction + half_width)


def _exact_added_area(radius: float, neighbours: np.ndarray) -> float:
    # boundary of B(0,R) minus the union: free arcs of circle 0 counter-clockwise,
    # arcs of each neighbour circle inside B(0,R) and outside the others clockwise
    origin = np.zeros(2)
    covering = []
    for centre in neighbours:
        covering.extend(_covered_arc(radius, origin, centre))
    area = sum(_arc_integral(radius, origin, a, b) for a, b in _subtract_intervals([(0.0, TWO_PI)], covering))
    for j, centre in enumerate(neighbours):
        inside = _covered_arc(radius, centre, origin)
        others = []
        for k, other in enumerate(neighbours):
            if k != j and np.hypot(*(other - centre)) < 2.0 * radius:
                others.extend(_covered_arc(radius, centre, other))
        for a, b in _subtract_intervals(inside, others):
            area -= _arc_integral(radius, centre, a, b)
    return min(max(area, 0.0), math.pi * radius ** 2)


def _grid_added_area(radius: float, neighbours: np.ndarray, resolution: float) -> float:
    step = resolution * radius
    count = int(math.ceil(2.0 * radius / step))
    axis = -radius + (np.arange(count) + 0.5) * (2.0 * radius / count)
    xx, yy = np.meshgrid(axis, axis, indexing='ij')
    free = xx ** 2 + yy ** 2 < radius ** 2
    for centre in neighbours:
        free &= (xx - centre[0]) ** 2 + (yy - centre[1]) ** 2 >= radius ** 2
    return float(free.sum()) * (2.0 * radius / count) ** 2


def added_disc_area(radius: float, x, neighbours, method: str = "exact",
                    resolution: float = 2 ** -10) -> float:
    """Area of B(x, R) not covered by the discs B(y, R) of ``neighbours``.

    ``neighbours`` is a Configuration or an ``(n, 2)`` array of positions.
    """
    if isinstance(x, MarkedPoint):
        x = x.position
    if isinstance(neighbours, Configuration):
        neighbours = neighbours.positions
    centre = np.asarray(x, dtype=float)
    relative = np.asarray(neighbours, dtype=float).reshape(-1, 2) - centre
    if relative.shape[0]:
        distances = np.hypot(relative[:, 0], relative[:, 1])
        if np.any(distances <= 1e-12 * radius):
            return 0.0
        relative = relative[distances < 2.0 * radius]
        distances = distances[distances < 2.0 * radius]
    full = math.pi * radius ** 2
    if relative.shape[0] == 0:
        return full
    if relative.shape[0] == 1:
        return full - lens_area(radius, float(distances[0]))
    if method == "grid":
        return _grid_added_area(radius, relative, resolution)
    return _exact_added_area(radius, relative)


def make_model(name: str, **options) -> GibbsModel:
    """Build a builtin model from its config name."""
    name = name.strip().lower()
    if name == "poisson":
        return PoissonModel(**options)
    if name == "strauss2":
        return TwoTypeStrauss(**options)
    if name == "area":
        return AreaInteraction(**options)
    raise UnsupportedModelError(f"unknown model '{name}' (expected poisson, strauss2 or area)")
