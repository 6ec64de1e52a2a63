from config.logging_config import PipelineLogger
from config.schemas import REPORT_FILES
from config.settings import RunConfig
from core.geometry import Configuration
from services.gof import GofReport, TestSpec, run_test
from services.report_writer import ReportWriter


def test_spec_from_config(run_config: RunConfig) -> TestSpec:
    return TestSpec(
        test=run_config.test.test,
        functions=tuple(run_config.residual.test_functions()),
        subdomains=run_config.covariance.subdomains,
        alpha=run_config.test.alpha,
        delta=run_config.covariance.delta,
        d_vee=run_config.covariance.d_vee,
        tol=run_config.estimation.tol,
        max_iter=run_config.estimation.max_iter,
    )


class GofHandler:
    """Handler for the ``gof`` command."""

    def __init__(self, writer: ReportWriter):
        self.writer = writer
        self.logger = PipelineLogger(__name__)

    def handle(self, run_config: RunConfig, pattern: Configuration) -> GofReport:
        model = run_config.model.build()
        spec = test_spec_from_config(run_config)
        window = run_config.window.domain().window

        try:
            self.logger.stage_started("goodness-of-fit test", f"{spec.test} with {', '.join(map(repr, spec.functions))}")
            report = run_test(pattern, model, spec, window, run_config.quadrature.spec(),
                              theta0=run_config.estimation.theta0)
            self.writer.write_json({'command': 'gof', 'model': model.to_dict(), 'spec': spec.to_dict(),
                                    **report.to_dict()}, REPORT_FILES['gof'])
            return report
        except Exception as e:
            self.logger.error("run goodness-of-fit test", e, spec.test)
            raise
