from config.logging_config import PipelineLogger
from config.schemas import REPORT_FILES
from config.settings import RunConfig
from core.geometry import Configuration
from services.mple import estimate_H_hat, fit_mple
from services.quadrature import summarize_pattern
from services.report_writer import ReportWriter
from utils.exceptions import FitError


class FitHandler:
    """Handler for the ``fit`` command."""

    def __init__(self, writer: ReportWriter):
        self.writer = writer
        self.logger = PipelineLogger(__name__)

    def handle(self, run_config: RunConfig, pattern: Configuration):
        model = run_config.model.build()
        window = run_config.window.domain().window
        estimation = run_config.estimation

        try:
            summary = summarize_pattern(pattern, model, window, run_config.quadrature.spec())
            fit = fit_mple(pattern, model, estimation.theta0, window, tol=estimation.tol,
                           max_iter=estimation.max_iter, summary=summary)
            payload = {'command': 'fit', 'model': model.to_dict(), 'window': window.to_dict(),
                       'n_points': int(summary.point_index.shape[0]), **fit.to_dict()}
            if fit.converged:
                payload['H_hat'] = estimate_H_hat(pattern, model, fit.theta_hat, window, summary=summary).tolist()
            self.writer.write_json(payload, REPORT_FILES['fit'])
        except Exception as e:
            self.logger.error("fit pseudolikelihood", e, model.name)
            raise

        if not fit.converged:
            raise FitError(f"MPLE did not converge: {fit.diagnostic}", iterations=fit.iterations,
                           gradient_norm=fit.gradient_norm, theta=fit.theta_hat)
        return fit
