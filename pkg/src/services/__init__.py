"""
Services module for the goodness-of-fit pipeline.

This module contains the numerical services and artifact I/O:
- sampler: marked Poisson and birth-death Gibbs simulation
- quadrature / residuals / mple / covariance: residual diagnostics and estimation
- gof: the χ² goodness-of-fit tests and null calibration
- ReportWriter: CSV/JSON artifact I/O
- ResultBuffer: thread-safe buffering of calibration rows
"""

from .report_writer import ReportWriter
from .result_buffer import ResultBuffer

__all__ = [
    'ReportWriter',
    'ResultBuffer'
]
