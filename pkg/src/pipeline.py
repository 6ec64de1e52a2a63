import json
import os
import sys
from typing import Optional

from config.logging_config import PipelineLogger
from config.schemas import REPORT_FILES
from config.settings import RunConfig
from core.geometry import Configuration
from handlers import CalibrateHandler, FitHandler, GofHandler, ResidualsHandler, SimulateHandler
from services.report_writer import ReportWriter
from utils.exceptions import ConfigError, GofError, PatternIOError
from utils.helpers import log_execution_time

COMMANDS = ('simulate', 'fit', 'residuals', 'gof', 'calibrate')
PATTERN_COMMANDS = ('fit', 'residuals', 'gof')


def report_error(error: GofError, output_dir: Optional[str] = None, command: Optional[str] = None) -> None:
    """Print the error as one JSON object on stderr and, if possible, keep a copy in the output directory."""
    payload = error.to_dict()
    if command is not None:
        payload['command'] = command
    text = json.dumps(payload, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    if output_dir is None:
        return
    try:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, REPORT_FILES['error']), 'w', encoding='utf-8') as handle:
            handle.write(text + '\n')
    except OSError:
        pass


class GofPipeline:
    """Dispatches one CLI command to its handler and maps failures to exit codes."""

    def __init__(self, run_config: RunConfig, output_dir: str, threads: int = 1):
        self.run_config = run_config
        self.output_dir = output_dir
        self.threads = max(1, int(threads))
        self.logger = PipelineLogger(__name__)

        self.writer = ReportWriter(output_dir)
        self.simulate_handler = SimulateHandler(self.writer)
        self.fit_handler = FitHandler(self.writer)
        self.residuals_handler = ResidualsHandler(self.writer)
        self.gof_handler = GofHandler(self.writer)
        self.calibrate_handler = CalibrateHandler(self.writer)

    def load_pattern(self, input_path: Optional[str]) -> Configuration:
        """Read the observed pattern; data are observed on the window enlarged by the guard."""
        if input_path is None:
            raise ConfigError("this command needs an input pattern (--input or 'input' in the run config)",
                              problems=["  - input: required"])
        domain = self.run_config.window.domain()
        if not os.path.isfile(input_path):
            raise PatternIOError(f"input pattern '{input_path}' does not exist", path=input_path)
        return self.writer.read_pattern(input_path, domain.dimension, domain.extended)

    @log_execution_time
    def execute(self, command: str, input_path: Optional[str] = None):
        if command == 'simulate':
            return self.simulate_handler.handle(self.run_config, self.threads)
        if command == 'calibrate':
            return self.calibrate_handler.handle(self.run_config, self.threads)
        pattern = self.load_pattern(input_path or self.run_config.input)
        if command == 'fit':
            return self.fit_handler.handle(self.run_config, pattern)
        if command == 'residuals':
            return self.residuals_handler.handle(self.run_config, pattern)
        return self.gof_handler.handle(self.run_config, pattern)

    def run(self, command: str, input_path: Optional[str] = None) -> int:
        """Run ``command``; returns the process exit code."""
        if command not in COMMANDS:
            error = ConfigError(f"unknown command '{command}' (expected {', '.join(COMMANDS)})")
            report_error(error, self.output_dir, command)
            return error.exit_code

        self.logger.stage_started(command, f"output → {self.output_dir}")
        try:
            self.execute(command, input_path)
        except GofError as e:
            self.logger.error(f"run {command}", e, e.stage)
            report_error(e, self.output_dir, command)
            return e.exit_code
        except Exception as e:
            self.logger.logger.exception(f"Unexpected failure in {command}: {e}")
            internal = GofError(f"{type(e).__name__}: {e}")
            internal.stage = "internal"
            report_error(internal, self.output_dir, command)
            return internal.exit_code

        self.logger.logger.info(f"Finished {command}; artifacts in '{self.output_dir}'")
        return 0
