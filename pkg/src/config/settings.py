import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

from dotenv import dotenv_values, load_dotenv

from core.geometry import ObservationDomain, integer_root
from core.models import GibbsModel, make_model
from services.quadrature import QuadratureSpec
from services.residuals import parse_test_functions
from services.sampler import SamplerConfig
from utils.exceptions import ConfigError, GofError
from utils.helpers import parse_vector

load_dotenv()

# Logging Configuration
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_COLORS = os.getenv('LOG_COLORS', 'true').lower() == 'true'
LOG_DIR = os.getenv('GOF_LOG_DIR', 'logs')

# Pipeline Configuration
OUTPUT_DIR = os.getenv('GOF_OUTPUT_DIR', 'output')
THREADS = int(os.getenv('GOF_THREADS', '1'))

# Run config keys and their defaults (None = no default)
DEFAULTS = {
    'model': None,
    'marks': None,
    'mark_weights': None,
    'range11': None,
    'range12': None,
    'range22': None,
    'hard_core': '0',
    'disc_radius': None,
    'window.side': None,
    'window.guard': None,
    'window.dimension': '2',
    'window.center': None,
    'input': None,
    'theta': None,
    'theta0': None,
    'fit.tol': '1e-9',
    'fit.max_iter': '100',
    'h': 'raw',
    'cov.delta': None,
    'cov.d_vee': None,
    'cov.subdomains': '4',
    'test': 't1',
    'alpha': '0.05',
    'sampler.seed': '0',
    'sampler.sweeps': '500',
    'sampler.replicates': '1',
    'sampler.reference_intensity': '1',
    'sampler.birth_fraction': '0.5',
    'sampler.move_fraction': '0',
    'quadrature.resolution': '64',
}

TEST_CHOICES = ('t1', 't1tilde', 't2tilde')


@dataclass(frozen=True)
class ModelBlock:
    name: str
    options: Dict[str, object] = field(default_factory=dict)

    def build(self) -> GibbsModel:
        return make_model(self.name, **self.options)


@dataclass(frozen=True)
class WindowBlock:
    side: float
    guard: float
    dimension: int
    center: tuple

    def domain(self) -> ObservationDomain:
        return ObservationDomain(self.center, self.side, self.guard, self.dimension)


@dataclass(frozen=True)
class EstimationBlock:
    theta: Optional[tuple] = None
    theta0: Optional[tuple] = None
    tol: float = 1e-9
    max_iter: int = 100


@dataclass(frozen=True)
class ResidualBlock:
    functions: str = 'raw'

    def test_functions(self) -> list:
        return parse_test_functions(self.functions)


@dataclass(frozen=True)
class CovarianceBlock:
    delta: Optional[float] = None
    d_vee: Optional[float] = None
    subdomains: int = 4


@dataclass(frozen=True)
class TestBlock:
    __test__ = False

    test: str = 't1'
    alpha: float = 0.05


@dataclass(frozen=True)
class SamplerBlock:
    seed: int = 0
    sweeps: int = 500
    replicates: int = 1
    reference_intensity: float = 1.0
    birth_fraction: float = 0.5
    move_fraction: float = 0.0

    def config(self, seed: Optional[int] = None) -> SamplerConfig:
        return SamplerConfig(self.seed if seed is None else seed, self.sweeps, self.birth_fraction,
                             self.reference_intensity, self.move_fraction)


@dataclass(frozen=True)
class QuadratureBlock:
    resolution: int = 64

    def spec(self) -> QuadratureSpec:
        return QuadratureSpec(self.resolution)


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    window: WindowBlock
    estimation: EstimationBlock
    residual: ResidualBlock
    covariance: CovarianceBlock
    test: TestBlock
    sampler: SamplerBlock
    quadrature: QuadratureBlock
    input: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'model': {'name': self.model.name, **self.model.options},
            'window': {'side': self.window.side, 'guard': self.window.guard,
                       'dimension': self.window.dimension, 'center': list(self.window.center)},
            'estimation': {'theta': self.estimation.theta, 'theta0': self.estimation.theta0,
                           'tol': self.estimation.tol, 'max_iter': self.estimation.max_iter},
            'residual': {'h': self.residual.functions},
            'covariance': {'delta': self.covariance.delta, 'd_vee': self.covariance.d_vee,
                           'subdomains': self.covariance.subdomains},
            'test': {'test': self.test.test, 'alpha': self.test.alpha},
            'sampler': {'seed': self.sampler.seed, 'sweeps': self.sampler.sweeps,
                        'replicates': self.sampler.replicates,
                        'reference_intensity': self.sampler.reference_intensity,
                        'birth_fraction': self.sampler.birth_fraction,
                        'move_fraction': self.sampler.move_fraction},
            'quadrature': {'resolution': self.quadrature.resolution},
            'input': self.input,
        }


class _Reader:
    """Typed access to raw config strings, collecting every problem found."""

    def __init__(self, values: Dict[str, Optional[str]]):
        self.values = values
        self.problems = []

    def raw(self, key: str) -> Optional[str]:
        value = self.values.get(key)
        if value is None or str(value).strip() == '':
            value = DEFAULTS.get(key)
        return None if value is None else str(value).strip()

    def typed(self, key: str, cast: Callable, required: bool = False):
        value = self.raw(key)
        if value is None:
            if required:
                self.problems.append(f"  - {key}: required")
            return None
        try:
            return cast(value)
        except (TypeError, ValueError):
            self.problems.append(f"  - {key}: cannot parse '{value}' as {getattr(cast, '__name__', 'value')}")
            return None

    def vector(self, key: str) -> Optional[tuple]:
        value = self.raw(key)
        if value is None:
            return None
        try:
            return tuple(parse_vector(value))
        except ValueError:
            self.problems.append(f"  - {key}: cannot parse '{value}' as a comma-separated vector")
            return None


def _model_block(reader: _Reader) -> Optional[ModelBlock]:
    name = reader.raw('model')
    if name is None:
        reader.problems.append("  - model: required (poisson, strauss2 or area)")
        return None
    name = name.lower()
    options = {}
    if name == 'poisson':
        marks = reader.vector('marks')
        if marks is not None:
            options['marks'] = tuple(int(m) for m in marks)
        weights = reader.vector('mark_weights')
        if weights is not None:
            options['mark_weights'] = weights
    elif name == 'strauss2':
        for key in ('range11', 'range12', 'range22'):
            options[key] = reader.typed(key, float, required=True)
        options['hard_core'] = reader.typed('hard_core', float)
        weights = reader.vector('mark_weights')
        if weights is not None:
            options['mark_weights'] = weights
    elif name == 'area':
        options['disc_radius'] = reader.typed('disc_radius', float, required=True)
    else:
        reader.problems.append(f"  - model: unknown model '{name}' (expected poisson, strauss2 or area)")
        return None
    if any(value is None for key, value in options.items() if key != 'hard_core'):
        return None
    if options.get('hard_core') is None:
        options.pop('hard_core', None)
    return ModelBlock(name, options)


def parse_run_config(values: Dict[str, Optional[str]]) -> RunConfig:
    """Validate raw key=value pairs and build a RunConfig; all problems are reported at once."""
    reader = _Reader(values)
    unknown = sorted(key for key in values if key not in DEFAULTS)
    for key in unknown:
        reader.problems.append(f"  - {key}: unknown key")

    model_block = _model_block(reader)
    model = None
    if model_block is not None:
        try:
            model = model_block.build()
        except GofError as e:
            reader.problems.append(f"  - model: {e}")

    dimension = reader.typed('window.dimension', int)
    side = reader.typed('window.side', float, required=True)
    guard = reader.typed('window.guard', float)
    if guard is None and model is not None:
        guard = model.range
    center = reader.vector('window.center')
    if side is not None and side <= 0:
        reader.problems.append(f"  - window.side: must be positive, got {side}")
    if dimension is not None and dimension < 1:
        reader.problems.append(f"  - window.dimension: must be positive, got {dimension}")
    if center is None and side is not None and dimension:
        center = tuple([0.5 * side] * dimension)
    if center is not None and dimension and len(center) != dimension:
        reader.problems.append(f"  - window.center: expected {dimension} coordinates, got {len(center)}")
    if model is not None and guard is not None and guard < model.range:
        reader.problems.append(f"  - window.guard: {guard} is below the model range {model.range}")
    if model is not None and model.dimension is not None and dimension and dimension != model.dimension:
        reader.problems.append(f"  - window.dimension: {model.name} is only defined in dimension {model.dimension}")

    theta = reader.vector('theta')
    theta0 = reader.vector('theta0')
    if model is not None:
        for key, vector in (('theta', theta), ('theta0', theta0)):
            if vector is None:
                continue
            try:
                model.check_theta(vector)
            except GofError as e:
                reader.problems.append(f"  - {key}: {e}")

    functions = reader.raw('h')
    try:
        parse_test_functions(functions)
    except GofError as e:
        reader.problems.append(f"  - h: {e}")

    subdomains = reader.typed('cov.subdomains', int)
    if subdomains is not None and dimension and integer_root(subdomains, dimension) is None:
        reader.problems.append(f"  - cov.subdomains: {subdomains} is not a {dimension}-th power of an integer")
    delta = reader.typed('cov.delta', float)
    d_vee = reader.typed('cov.d_vee', float)

    test = (reader.raw('test') or 't1').lower()
    if test not in TEST_CHOICES:
        reader.problems.append(f"  - test: unknown test '{test}' (expected {', '.join(TEST_CHOICES)})")
    alpha = reader.typed('alpha', float)
    if alpha is not None and not 0.0 < alpha < 1.0:
        reader.problems.append(f"  - alpha: must lie in (0, 1), got {alpha}")

    sampler_values = {key: reader.typed(f'sampler.{key}', cast) for key, cast in (
        ('seed', int), ('sweeps', int), ('replicates', int), ('reference_intensity', float),
        ('birth_fraction', float), ('move_fraction', float))}
    if sampler_values['replicates'] is not None and sampler_values['replicates'] < 1:
        reader.problems.append("  - sampler.replicates: must be at least 1")
    if None not in sampler_values.values():
        try:
            SamplerBlock(**sampler_values).config()
        except GofError as e:
            reader.problems.append(f"  - sampler: {e}")

    resolution = reader.typed('quadrature.resolution', int)
    if resolution is not None and resolution < 1:
        reader.problems.append(f"  - quadrature.resolution: must be positive, got {resolution}")

    tol = reader.typed('fit.tol', float)
    max_iter = reader.typed('fit.max_iter', int)
    if tol is not None and not tol > 0:
        reader.problems.append(f"  - fit.tol: must be positive, got {tol}")
    if max_iter is not None and max_iter < 1:
        reader.problems.append(f"  - fit.max_iter: must be at least 1, got {max_iter}")

    input_path = reader.raw('input')
    if input_path is not None and not os.path.exists(input_path):
        reader.problems.append(f"  - input: file '{input_path}' does not exist")

    if reader.problems:
        raise ConfigError("Invalid run configuration:\n" + "\n".join(reader.problems), problems=reader.problems)

    return RunConfig(
        model=model_block,
        window=WindowBlock(side, guard, dimension, center),
        estimation=EstimationBlock(theta, theta0, tol, max_iter),
        residual=ResidualBlock(functions),
        covariance=CovarianceBlock(delta, d_vee, subdomains),
        test=TestBlock(test, alpha),
        sampler=SamplerBlock(**sampler_values),
        quadrature=QuadratureBlock(resolution),
        input=input_path,
    )


def load_run_config(path: str, overrides: Optional[Dict[str, Optional[str]]] = None) -> RunConfig:
    """Read a key=value run config file; CLI overrides replace file values."""
    if not os.path.isfile(path):
        raise ConfigError(f"run config '{path}' does not exist", problems=[f"  - config: missing file {path}"])
    values = dict(dotenv_values(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = str(value)
    return parse_run_config(values)
