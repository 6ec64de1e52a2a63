from config.logging_config import PipelineLogger
from config.schemas import REPORT_FILES, replicate_file
from config.settings import RunConfig
from core.models import PoissonModel
from services.report_writer import ReportWriter
from services.sampler import sample_batch, simulate
from utils.exceptions import ConfigError
from utils.helpers import format_count


class SimulateHandler:
    """Handler for the ``simulate`` command."""

    def __init__(self, writer: ReportWriter):
        self.writer = writer
        self.logger = PipelineLogger(__name__)

    def handle(self, run_config: RunConfig, threads: int = 1) -> list:
        """Simulate the configured replicates and write one CSV each plus a manifest."""
        if run_config.estimation.theta is None:
            raise ConfigError("simulate needs the true parameter 'theta'", problems=["  - theta: required"])
        model = run_config.model.build()
        domain = run_config.window.domain()
        sampler = run_config.sampler
        theta = model.check_theta(run_config.estimation.theta)

        try:
            self.logger.stage_started("simulation", f"{model.name}, {format_count(sampler.replicates, 'replicate')}")
            if isinstance(model, PoissonModel):
                patterns = [simulate(model, theta, domain.extended, sampler.config(sampler.seed + i))
                            for i in range(sampler.replicates)]
            else:
                patterns = sample_batch(model, theta, domain.extended, sampler.replicates, sampler.seed,
                                        sampler.config(), threads)

            files = [self.writer.write_pattern(pattern, replicate_file(i)) for i, pattern in enumerate(patterns)]
            self.writer.write_json({
                'command': 'simulate',
                'model': model.to_dict(),
                'theta': theta.tolist(),
                'window': domain.to_dict(),
                'extended_window': domain.extended.to_dict(),
                'sampler': sampler.config().to_dict(),
                'replicates': [{'file': f, 'seed': sampler.seed + i, 'n_points': len(p)}
                               for i, (f, p) in enumerate(zip(files, patterns))],
            }, REPORT_FILES['manifest'])
            return patterns
        except Exception as e:
            self.logger.error("simulate patterns", e, model.name)
            raise
