import numpy as np
import pandas as pd

from config.logging_config import PipelineLogger
from config.schemas import CELL_RESIDUAL_COLUMNS, COORDINATE_COLUMNS, REPORT_FILES
from config.settings import RunConfig
from core.geometry import Configuration, partition_window
from services.covariance import resolve_delta
from services.mple import fit_mple
from services.quadrature import summarize_pattern
from services.report_writer import ReportWriter
from services.residuals import cell_terms, innovations, residuals, subdomain_terms
from utils.exceptions import FitError


class ResidualsHandler:
    """Handler for the ``residuals`` command."""

    def __init__(self, writer: ReportWriter):
        self.writer = writer
        self.logger = PipelineLogger(__name__)

    def handle(self, run_config: RunConfig, pattern: Configuration) -> dict:
        """Fit θ̂, then report residuals on the window, per subdomain and per cell."""
        model = run_config.model.build()
        window = run_config.window.domain().window
        functions = run_config.residual.test_functions()
        grid = partition_window(window, resolve_delta(model, run_config.covariance.delta),
                                run_config.covariance.subdomains)

        try:
            summary = summarize_pattern(pattern, model, window, run_config.quadrature.spec(), grid)
            fit = fit_mple(pattern, model, run_config.estimation.theta0, window, tol=run_config.estimation.tol,
                           max_iter=run_config.estimation.max_iter, summary=summary)
            if not fit.converged:
                raise FitError(f"MPLE did not converge: {fit.diagnostic}", fit=fit.to_dict())

            cells = pd.DataFrame({'cell': np.arange(grid.n_cells), 'subdomain': grid.subdomain_of})
            centers = np.array([grid.cell(i).center for i in range(grid.n_cells)])
            for axis in range(grid.dimension):
                cells[f"{COORDINATE_COLUMNS[axis]}_center"] = centers[:, axis]

            report = {'command': 'residuals', 'model': model.to_dict(), 'theta_hat': fit.theta_hat.tolist(),
                      'fit': fit.to_dict(), 'grid': grid.to_dict(), 'functions': {}}
            for h in functions:
                value = residuals(pattern, model, fit.theta_hat, h, window, summary=summary)
                integral, total, _ = subdomain_terms(summary, fit.theta_hat, h)
                entry = {
                    'window': value.to_dict(),
                    'subdomains': [{'region': grid.subdomain(j).to_dict(), 'integral_term': float(integral[j]),
                                    'sum_term': float(total[j]), 'value': float(integral[j] - total[j])}
                                   for j in range(grid.subdomains)],
                    'mean': float(np.mean(integral - total)),
                }
                if run_config.estimation.theta is not None:
                    entry['innovations'] = innovations(pattern, model, run_config.estimation.theta, h, window,
                                                       summary=summary).to_dict()
                report['functions'][repr(h)] = entry

                cell_integral, cell_total, _ = cell_terms(summary, fit.theta_hat, h)
                cells[repr(h)] = cell_integral - cell_total

            self.writer.write_json(report, REPORT_FILES['residuals'])
            self.writer.write_frame(cells[CELL_RESIDUAL_COLUMNS + [c for c in cells.columns
                                                                   if c not in CELL_RESIDUAL_COLUMNS]],
                                    REPORT_FILES['cell_residuals'])
            return report
        except Exception as e:
            self.logger.error("compute residuals", e, model.name)
            raise
