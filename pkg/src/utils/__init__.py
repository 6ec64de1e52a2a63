"""
Utilities module for the goodness-of-fit pipeline.

This module contains utility functions, decorators and the error hierarchy:
- log_execution_time: Decorator for timing pipeline commands
- format_duration / format_count: log message helpers
- GofError and subclasses: errors carrying CLI exit codes
"""

from .helpers import (
    log_execution_time,
    format_duration,
    format_count,
    parse_vector
)
from .exceptions import GofError

__all__ = [
    'log_execution_time',
    'format_duration',
    'format_count',
    'parse_vector',
    'GofError'
]
