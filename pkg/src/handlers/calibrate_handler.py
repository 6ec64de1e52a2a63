from config.logging_config import PipelineLogger
from config.schemas import REPORT_FILES
from config.settings import RunConfig
from handlers.gof_handler import test_spec_from_config
from services.gof import CalibrationResult, calibrate_null
from services.report_writer import ReportWriter
from services.result_buffer import ResultBuffer
from utils.exceptions import CalibrationFailure, ConfigError


class CalibrateHandler:
    """Handler for the ``calibrate`` command."""

    def __init__(self, writer: ReportWriter):
        self.writer = writer
        self.buffer = ResultBuffer()
        self.logger = PipelineLogger(__name__)

    def handle(self, run_config: RunConfig, threads: int = 1) -> CalibrationResult:
        if run_config.estimation.theta is None:
            raise ConfigError("calibrate needs the null parameter 'theta'", problems=["  - theta: required"])
        model = run_config.model.build()
        spec = test_spec_from_config(run_config)
        sampler = run_config.sampler

        try:
            result = calibrate_null(model, run_config.estimation.theta, spec, sampler.replicates, sampler.seed,
                                    run_config.window.domain(), sampler.config(), run_config.quadrature.spec(),
                                    threads=threads, buffer=self.buffer)
        except CalibrationFailure as e:
            # keep the per-replicate table for inspection
            self.writer.write_frame(self.buffer.get_calibration(), REPORT_FILES['calibration'])
            self.logger.error("calibrate null distribution", e, spec.test)
            raise

        self.writer.write_frame(result.table, REPORT_FILES['calibration'])
        self.writer.write_json({'command': 'calibrate', 'model': model.to_dict(), 'spec': spec.to_dict(),
                                'theta': list(run_config.estimation.theta), 'seed': sampler.seed,
                                **result.to_dict()}, REPORT_FILES['calibration_summary'])
        return result
