"""Marked Poisson sampling and birth-death Metropolis-Hastings for Gibbs models."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from config.logging_config import PipelineLogger
from core.geometry import Configuration, Cube
from core.models import GibbsModel, PoissonModel
from utils.exceptions import InvalidParameterError

logger = PipelineLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    sweeps: int = 500
    birth_fraction: float = 0.5
    reference_intensity: float = 1.0
    move_fraction: float = 0.0

    def __post_init__(self):
        if int(self.sweeps) < 1:
            raise InvalidParameterError(f"sweeps must be at least 1, got {self.sweeps}")
        if not 0.0 < self.birth_fraction < 1.0:
            raise InvalidParameterError(f"birth fraction must lie in (0, 1), got {self.birth_fraction}")
        if not self.reference_intensity > 0:
            raise InvalidParameterError(f"reference intensity must be positive, got {self.reference_intensity}")
        if not 0.0 <= self.move_fraction < 1.0:
            raise InvalidParameterError(f"move fraction must lie in [0, 1), got {self.move_fraction}")

    def to_dict(self) -> dict:
        return {'seed': self.seed, 'sweeps': self.sweeps, 'birth_fraction': self.birth_fraction,
                'reference_intensity': self.reference_intensity, 'move_fraction': self.move_fraction}


def sample_poisson(window: Cube, intensity: float, marks: Sequence[int] = (0,),
                   weights: Optional[Sequence[float]] = None, seed: Optional[int] = None) -> Configuration:
    """Homogeneous marked Poisson process of the given intensity on ``window``."""
    if not intensity > 0:
        raise InvalidParameterError(f"intensity must be positive, got {intensity}")
    marks = np.asarray(marks)
    weights = np.full(marks.shape[0], 1.0 / marks.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-12:
        raise InvalidParameterError(f"mark weights must sum to 1, got {weights.tolist()}")
    rng = np.random.default_rng(seed)
    count = rng.poisson(intensity * window.volume)
    positions = np.asarray(window.lower) + rng.random((count, window.dimension)) * window.sides
    point_marks = rng.choice(marks, size=count, p=weights)
    return Configuration._trusted(positions, point_marks, window)


def birth_acceptance_ratio(energy: float, n_points: int, intensity: float, volume: float,
                           birth_fraction: float = 0.5) -> float:
    """((1−p_b)/p_b) · z|W| / (n+1) · e^{−V(x|φ)} for adding x to a pattern of n points."""
    if not math.isfinite(energy):
        return 0.0 if energy > 0 else math.inf
    return (1.0 - birth_fraction) / birth_fraction * intensity * volume / (n_points + 1) * math.exp(-energy)


def death_acceptance_ratio(energy: float, n_points: int, intensity: float, volume: float,
                           birth_fraction: float = 0.5) -> float:
    """Inverse of the birth ratio: removing x, with V(x|φ\\x), from a pattern of n points."""
    return birth_fraction / (1.0 - birth_fraction) * n_points / (intensity * volume) * math.exp(energy)


def proposal_budget(model: GibbsModel, theta, window: Cube, config: SamplerConfig) -> int:
    """sweeps × ⌈z |W| e^{max(0, −θ₁)}⌉: one sweep per expected non-interacting point."""
    expected = config.reference_intensity * window.volume * model.activity_bound(theta)
    return int(config.sweeps) * int(math.ceil(expected))


class _ChainState:
    """Growable point arrays with swap-remove deletion."""

    def __init__(self, dimension: int, capacity: int = 64):
        self.positions = np.empty((capacity, dimension))
        self.marks = np.empty(capacity, dtype=np.int64)
        self.n = 0

    def add(self, position: np.ndarray, mark: int) -> None:
        if self.n == self.positions.shape[0]:
            self.positions = np.vstack([self.positions, np.empty_like(self.positions)])
            self.marks = np.concatenate([self.marks, np.empty_like(self.marks)])
        self.positions[self.n] = position
        self.marks[self.n] = mark
        self.n += 1

    def remove(self, index: int) -> None:
        last = self.n - 1
        self.positions[index] = self.positions[last]
        self.marks[index] = self.marks[last]
        self.n = last


def _energy(model: GibbsModel, theta: np.ndarray, position: np.ndarray, mark: int, state: _ChainState,
            exclude: int = -1) -> float:
    stats, forbidden = model.evaluate(position[None, :], np.array([mark]), state.positions[:state.n],
                                      state.marks[:state.n], exclude=np.array([exclude]))
    return float(model.energies(theta, stats, forbidden)[0])


def sample_gibbs(model: GibbsModel, theta, window: Cube, config: SamplerConfig = SamplerConfig()) -> Configuration:
    """Run a birth-death(-move) chain from the empty pattern with empty boundary condition."""
    theta = model.check_theta(theta)
    model.check_dimension(window.dimension)
    model.stability_constant(theta)

    rng = np.random.default_rng(config.seed)
    volume = window.volume
    z = config.reference_intensity
    lower = np.asarray(window.lower)
    sides = window.sides
    mark_values = np.asarray(model.marks)
    state = _ChainState(window.dimension)
    pb = config.birth_fraction
    pm = config.move_fraction

    n_proposals = proposal_budget(model, theta, window, config)
    accepted = 0
    for _ in range(n_proposals):
        kind = rng.random()
        if kind < pm:
            if state.n == 0:
                continue
            i = int(rng.integers(state.n))
            target = lower + rng.random(window.dimension) * sides
            mark = int(state.marks[i])
            old = _energy(model, theta, state.positions[i], mark, state, exclude=i)
            new = _energy(model, theta, target, mark, state, exclude=i)
            ratio = math.exp(min(0.0, old - new)) if math.isfinite(new) else 0.0
            if rng.random() < ratio:
                state.positions[i] = target
                accepted += 1
        elif (kind - pm) / (1.0 - pm) < pb:
            position = lower + rng.random(window.dimension) * sides
            mark = int(rng.choice(mark_values, p=model.mark_weights))
            energy = _energy(model, theta, position, mark, state)
            if rng.random() < birth_acceptance_ratio(energy, state.n, z, volume, pb):
                state.add(position, mark)
                accepted += 1
        else:
            if state.n == 0:
                continue
            i = int(rng.integers(state.n))
            energy = _energy(model, theta, state.positions[i], int(state.marks[i]), state, exclude=i)
            if rng.random() < death_acceptance_ratio(energy, state.n, z, volume, pb):
                state.remove(i)
                accepted += 1

    logger.logger.debug(f"Chain seed {config.seed}: {n_proposals} proposals, {accepted} accepted, "
                        f"{state.n} point(s)")
    return Configuration._trusted(state.positions[:state.n], state.marks[:state.n], window)


def simulate(model: GibbsModel, theta, window: Cube, config: SamplerConfig = SamplerConfig()) -> Configuration:
    """One replicate; Poisson models are sampled exactly, others by the birth-death chain."""
    if isinstance(model, PoissonModel):
        theta = model.check_theta(theta)
        intensity = config.reference_intensity * math.exp(-float(theta[0]))
        return sample_poisson(window, intensity, model.marks, model.mark_weights, config.seed)
    return sample_gibbs(model, theta, window, config)


def sample_batch(model: GibbsModel, theta, window: Cube, n_replicates: int, base_seed: int,
                 config: SamplerConfig = SamplerConfig(), threads: int = 1) -> list:
    """Independent chains seeded ``base_seed + i``, returned in replicate order."""
    if n_replicates < 1:
        raise InvalidParameterError(f"n_replicates must be at least 1, got {n_replicates}")
    configs = [replace(config, seed=base_seed + i) for i in range(n_replicates)]
    logger.stage_started("sampling", f"{n_replicates} chain(s), base seed {base_seed}, {threads} thread(s)")
    if threads <= 1:
        return [sample_gibbs(model, theta, window, c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda c: sample_gibbs(model, theta, window, c), configs))
