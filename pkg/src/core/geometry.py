"""Marked point configurations, cubic windows and grid partitions."""

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from utils.exceptions import InvalidConfigurationError, InvalidGridError

# Above this many query/point pairs neighbour queries go through a KD-tree
BRUTE_FORCE_PAIRS = 250_000


@dataclass(frozen=True)
class Cube:
    """Axis-aligned box ``[lower, upper)``; cells and windows are cubes."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper) or not lower:
            raise InvalidGridError(f"cube bounds have mismatched dimensions: {lower} / {upper}")
        if any(u < l for l, u in zip(lower, upper)):
            raise InvalidGridError(f"cube upper bound below lower bound: {lower} / {upper}")
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @classmethod
    def from_center(cls, center: Sequence[float], side: float) -> 'Cube':
        half = 0.5 * float(side)
        return cls(tuple(c - half for c in center), tuple(c + half for c in center))

    @classmethod
    def from_lower(cls, lower: Sequence[float], side: float) -> 'Cube':
        return cls(tuple(lower), tuple(l + float(side) for l in lower))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def side(self) -> float:
        return float(self.sides.max())

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def center(self) -> tuple:
        return tuple(0.5 * (l + u) for l, u in zip(self.lower, self.upper))

    def contains(self, positions) -> np.ndarray:
        """Half-open membership: lower faces inclusive, upper faces exclusive."""
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        return np.all((positions >= lower) & (positions < upper), axis=1)

    def expand(self, margin: float) -> 'Cube':
        return Cube(tuple(l - margin for l in self.lower), tuple(u + margin for u in self.upper))

    def covers(self, other: 'Cube', tol: float = 1e-12) -> bool:
        return all(sl <= ol + tol for sl, ol in zip(self.lower, other.lower)) and \
            all(su >= ou - tol for su, ou in zip(self.upper, other.upper))

    def to_dict(self) -> dict:
        return {'lower': list(self.lower), 'upper': list(self.upper)}


@dataclass(frozen=True)
class MarkedPoint:
    position: tuple
    mark: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'position', tuple(float(v) for v in np.ravel(self.position)))
        object.__setattr__(self, 'mark', int(self.mark))

    @property
    def dimension(self) -> int:
        return len(self.position)


class Configuration:
    """A finite simple marked point pattern, optionally carrying its observation window.

    A configuration without a window is treated as observed everywhere.
    """

    def __init__(self, positions=(), marks=None, window: Optional[Cube] = None, dimension: Optional[int] = None):
        if dimension is None:
            dimension = window.dimension if window is not None else 2
        positions = np.asarray(positions, dtype=float)
        if positions.size == 0:
            positions = np.empty((0, dimension))
        if positions.ndim != 2:
            raise InvalidConfigurationError(f"positions must be an (n, d) array, got shape {positions.shape}")
        if window is not None and positions.shape[1] != window.dimension:
            raise InvalidConfigurationError(
                f"positions have {positions.shape[1]} coordinates but the window is {window.dimension}-dimensional")
        if not np.all(np.isfinite(positions)):
            raise InvalidConfigurationError("positions must be finite")

        n = positions.shape[0]
        marks = np.zeros(n, dtype=np.int64) if marks is None else np.asarray(marks, dtype=np.int64).reshape(-1)
        if marks.shape[0] != n:
            raise InvalidConfigurationError(f"{n} positions but {marks.shape[0]} marks")
        if n > 1 and np.unique(positions, axis=0).shape[0] != n:
            raise InvalidConfigurationError("configuration is not simple: two points share a position")

        self._init(positions, marks, window)

    @classmethod
    def _trusted(cls, positions: np.ndarray, marks: np.ndarray, window: Optional[Cube]) -> 'Configuration':
        """Build without validation; callers guarantee simplicity."""
        config = cls.__new__(cls)
        config._init(np.asarray(positions, dtype=float), np.asarray(marks, dtype=np.int64), window)
        return config

    def _init(self, positions, marks, window):
        positions = positions.copy()
        marks = marks.copy()
        positions.setflags(write=False)
        marks.setflags(write=False)
        self._positions = positions
        self._marks = marks
        self._window = window

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def marks(self) -> np.ndarray:
        return self._marks

    @property
    def window(self) -> Optional[Cube]:
        return self._window

    @property
    def dimension(self) -> int:
        return self._positions.shape[1]

    def __len__(self) -> int:
        return self._positions.shape[0]

    def __iter__(self) -> Iterator[MarkedPoint]:
        for position, mark in zip(self._positions, self._marks):
            yield MarkedPoint(tuple(position), int(mark))

    def __getitem__(self, index: int) -> MarkedPoint:
        return MarkedPoint(tuple(self._positions[index]), int(self._marks[index]))

    def __repr__(self) -> str:
        return f"Configuration(n={len(self)}, d={self.dimension}, window={self._window})"

    def with_window(self, window: Optional[Cube]) -> 'Configuration':
        return Configuration._trusted(self._positions, self._marks, window)

    def restrict(self, region: Cube) -> 'Configuration':
        mask = region.contains(self._positions) if len(self) else np.zeros(0, dtype=bool)
        return Configuration._trusted(self._positions[mask], self._marks[mask], region)

    def remove(self, index: int) -> 'Configuration':
        keep = np.ones(len(self), dtype=bool)
        keep[index] = False
        return Configuration._trusted(self._positions[keep], self._marks[keep], self._window)

    def add(self, point: MarkedPoint) -> 'Configuration':
        return self.union(Configuration([point.position], [point.mark], dimension=point.dimension))

    def union(self, other: 'Configuration') -> 'Configuration':
        return Configuration(
            np.vstack([self._positions, other.positions]),
            np.concatenate([self._marks, other.marks]),
            self._window,
            dimension=self.dimension,
        )

    def translate(self, shift: Sequence[float]) -> 'Configuration':
        shift = np.asarray(shift, dtype=float)
        window = None
        if self._window is not None:
            window = Cube(tuple(np.asarray(self._window.lower) + shift), tuple(np.asarray(self._window.upper) + shift))
        return Configuration._trusted(self._positions + shift, self._marks, window)


def restrict(config: Configuration, region: Cube) -> Configuration:
    """Points of ``config`` lying in ``region`` (half-open convention)."""
    return config.restrict(region)


@dataclass(frozen=True)
class ObservationDomain:
    """Analysis window Λ = cube(center, side) observed together with a guard margin."""

    center: tuple
    side: float
    guard: float = 0.0
    dimension: int = 2

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        if len(center) != self.dimension:
            raise InvalidGridError(f"center {center} is not {self.dimension}-dimensional")
        if self.side <= 0:
            raise InvalidGridError(f"window side must be positive, got {self.side}")
        if self.guard < 0:
            raise InvalidGridError(f"guard must be nonnegative, got {self.guard}")
        object.__setattr__(self, 'center', center)

    @classmethod
    def unit(cls, dimension: int = 2, side: float = 1.0, guard: float = 0.0) -> 'ObservationDomain':
        return cls(tuple([0.5 * side] * dimension), side, guard, dimension)

    @property
    def window(self) -> Cube:
        return Cube.from_center(self.center, self.side)

    @property
    def extended(self) -> Cube:
        return self.window.expand(self.guard)

    def to_dict(self) -> dict:
        return {'center': list(self.center), 'side': self.side, 'guard': self.guard, 'dimension': self.dimension}


@dataclass(frozen=True)
class CellGrid:
    """Partition of a cubic window into ``cells_per_side**d`` congruent half-open cells.

    Cells are indexed in C (lexicographic) order. With ``|J| > 1`` subdomains
    the window is first split into ``q**d`` congruent sub-cubes, ``q**d = |J|``,
    each gridded with ``cells_per_subdomain`` cells per side.
    """

    window: Cube
    cells_per_side: int
    subdomains: int = 1

    def __post_init__(self):
        q = integer_root(self.subdomains, self.window.dimension)
        if q is None or self.cells_per_side % q:
            raise InvalidGridError(
                f"{self.cells_per_side} cells per side cannot be split into {self.subdomains} subdomains")

    @property
    def dimension(self) -> int:
        return self.window.dimension

    @property
    def subdomains_per_side(self) -> int:
        return integer_root(self.subdomains, self.dimension)

    @property
    def cells_per_subdomain(self) -> int:
        return self.cells_per_side // self.subdomains_per_side

    @property
    def cell_side(self) -> float:
        return self.window.side / self.cells_per_side

    @property
    def n_cells(self) -> int:
        return self.cells_per_side ** self.dimension

    @property
    def shape(self) -> tuple:
        return (self.cells_per_side,) * self.dimension

    @cached_property
    def edges(self) -> tuple:
        """Shared per-axis cell edges; neighbouring cells use the same float boundary."""
        k = self.cells_per_side
        axes = []
        for lower, upper in zip(self.window.lower, self.window.upper):
            edge = lower + (upper - lower) * np.arange(k + 1) / k
            edge[0], edge[-1] = lower, upper
            axes.append(edge)
        return tuple(axes)

    def cell(self, index: int) -> Cube:
        multi = np.unravel_index(index, self.shape)
        return Cube(tuple(self.edges[a][i] for a, i in enumerate(multi)),
                    tuple(self.edges[a][i + 1] for a, i in enumerate(multi)))

    @property
    def cells(self) -> list:
        return [self.cell(i) for i in range(self.n_cells)]

    @cached_property
    def subdomain_of(self) -> np.ndarray:
        """Subdomain label of every cell."""
        m = self.cells_per_subdomain
        q = self.subdomains_per_side
        multi = np.unravel_index(np.arange(self.n_cells), self.shape)
        return np.ravel_multi_index(tuple(axis // m for axis in multi), (q,) * self.dimension)

    def subdomain(self, label: int) -> Cube:
        m = self.cells_per_subdomain
        multi = np.unravel_index(label, (self.subdomains_per_side,) * self.dimension)
        return Cube(tuple(self.edges[a][i * m] for a, i in enumerate(multi)),
                    tuple(self.edges[a][(i + 1) * m] for a, i in enumerate(multi)))

    @property
    def subdomain_volume(self) -> float:
        return self.window.volume / self.subdomains

    def locate(self, positions) -> np.ndarray:
        """Cell index of each position, -1 outside the window."""
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if positions.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        k = self.cells_per_side
        axes = []
        inside = np.ones(positions.shape[0], dtype=bool)
        for a in range(self.dimension):
            idx = np.searchsorted(self.edges[a], positions[:, a], side='right') - 1
            inside &= (idx >= 0) & (idx < k)
            axes.append(np.clip(idx, 0, k - 1))
        index = np.ravel_multi_index(tuple(axes), self.shape)
        return np.where(inside, index, -1)

    def to_dict(self) -> dict:
        return {
            'window': self.window.to_dict(),
            'cells_per_side': self.cells_per_side,
            'cell_side': self.cell_side,
            'subdomains': self.subdomains,
        }


def integer_root(value: int, dimension: int) -> Optional[int]:
    if value < 1:
        return None
    root = int(round(value ** (1.0 / dimension)))
    for candidate in (root - 1, root, root + 1):
        if candidate >= 1 and candidate ** dimension == value:
            return candidate
    return None


def partition_window(domain, delta: float, subdomains: int = 1) -> CellGrid:
    """Grid the analysis window at cell side δ_n = L_sub / ⌊L_sub / δ⌋.

    ``domain`` is an ObservationDomain or a cubic window.
    """
    window = domain.window if isinstance(domain, ObservationDomain) else domain
    sides = window.sides
    if not np.allclose(sides, sides[0], rtol=1e-12, atol=0.0):
        raise InvalidGridError(f"window is not cubic: sides {sides.tolist()}")
    if delta is None or not np.isfinite(delta) or delta <= 0:
        raise InvalidGridError(f"cell side must be positive, got {delta}")
    q = integer_root(int(subdomains), window.dimension)
    if q is None:
        raise InvalidGridError(
            f"{subdomains} subdomains is not a {window.dimension}-th power of an integer")
    sub_side = float(sides[0]) / q
    if delta > sub_side * (1 + 1e-12):
        raise InvalidGridError(f"cell side {delta} exceeds the (sub)window side {sub_side}")
    per_sub = max(1, int(math.floor(sub_side / delta + 1e-9)))
    return CellGrid(window, per_sub * q, int(subdomains))


def neighbour_offsets(radius: int, dimension: int) -> list:
    """Index offsets of the closed max-norm ball of the given radius, in lexicographic order."""
    return list(itertools.product(range(-radius, radius + 1), repeat=dimension))


def _pair_distances(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    diff = query[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum('ijk,ijk->ij', diff, diff))


def count_within(query, points, radius: float, exclude=None, strict: bool = False) -> np.ndarray:
    """Number of ``points`` within ``radius`` of each query (``< radius`` when strict).

    ``exclude[i]`` names a point index not counted for query ``i`` (``-1`` for none).
    """
    query = np.atleast_2d(np.asarray(query, dtype=float))
    points = np.asarray(points, dtype=float)
    nq = query.shape[0]
    if nq == 0 or points.shape[0] == 0 or radius < 0 or (strict and radius <= 0):
        return np.zeros(nq, dtype=np.int64)
    if nq * points.shape[0] <= BRUTE_FORCE_PAIRS:
        dist = _pair_distances(query, points)
        if exclude is not None:
            rows = np.flatnonzero(np.asarray(exclude) >= 0)
            dist[rows, np.asarray(exclude)[rows]] = np.inf
        hits = dist < radius if strict else dist <= radius
        return hits.sum(axis=1).astype(np.int64)
    r = np.nextafter(radius, 0.0) if strict else radius
    counts = np.asarray(cKDTree(points).query_ball_point(query, r, return_length=True), dtype=np.int64)
    if exclude is not None:
        exclude = np.asarray(exclude)
        rows = np.flatnonzero(exclude >= 0)
        if rows.size:
            own = np.linalg.norm(query[rows] - points[exclude[rows]], axis=1)
            counts[rows] -= (own < radius if strict else own <= radius)
    return counts


def neighbour_lists(query, points, radius: float, exclude=None, strict: bool = True) -> list:
    """Indices of ``points`` within ``radius`` of each query, one sorted array per query."""
    query = np.atleast_2d(np.asarray(query, dtype=float))
    points = np.asarray(points, dtype=float)
    nq = query.shape[0]
    if points.shape[0] == 0 or radius <= 0:
        return [np.zeros(0, dtype=np.int64) for _ in range(nq)]
    exclude = np.full(nq, -1) if exclude is None else np.asarray(exclude)
    if nq * points.shape[0] <= BRUTE_FORCE_PAIRS:
        dist = _pair_distances(query, points)
        hits = dist < radius if strict else dist <= radius
        lists = [np.flatnonzero(row) for row in hits]
    else:
        r = np.nextafter(radius, 0.0) if strict else radius
        lists = [np.asarray(sorted(found), dtype=np.int64)
                 for found in cKDTree(points).query_ball_point(query, r)]
    return [row[row != skip] if skip >= 0 else row for row, skip in zip(lists, exclude)]


def nearest_distances(query, points, exclude=None) -> np.ndarray:
    """Distance from each query to the nearest point, ``inf`` when there is none."""
    query = np.atleast_2d(np.asarray(query, dtype=float))
    points = np.asarray(points, dtype=float)
    nq = query.shape[0]
    if nq == 0:
        return np.zeros(0)
    if points.shape[0] == 0:
        return np.full(nq, np.inf)
    if nq * points.shape[0] <= BRUTE_FORCE_PAIRS:
        dist = _pair_distances(query, points)
        if exclude is not None:
            rows = np.flatnonzero(np.asarray(exclude) >= 0)
            dist[rows, np.asarray(exclude)[rows]] = np.inf
        return dist.min(axis=1)
    k = 1 if exclude is None else min(2, points.shape[0])
    dist, idx = cKDTree(points).query(query, k=k)
    if k == 1:
        if exclude is None:
            return dist
        dist, idx = dist[:, None], idx[:, None]
    dist = np.where(idx == np.asarray(exclude)[:, None] if exclude is not None else False, np.inf, dist)
    return dist.min(axis=1)


def nearest_distance(x, config: Configuration) -> float:
    """Euclidean distance from ``x`` to the nearest point of ``config``, marks ignored."""
    position = x.position if isinstance(x, MarkedPoint) else x
    if len(config) == 0:
        return math.inf
    return float(nearest_distances(np.asarray(position, dtype=float)[None, :], config.positions)[0])
