import logging
import os
import sys
from datetime import datetime


class PipelineFormatter(logging.Formatter):
    """Custom formatter for goodness-of-fit pipeline logs."""

    # Color codes for different log levels
    COLORS = {
        'DEBUG': '\033[36m',     # Cyan
        'INFO': '\033[32m',      # Green
        'WARNING': '\033[33m',   # Yellow
        'ERROR': '\033[31m',     # Red
        'CRITICAL': '\033[35m',  # Magenta
        'RESET': '\033[0m'       # Reset
    }

    # Icons for the pipeline stages
    ICONS = {
        'pipeline': '🧭',
        'sampler': '🎲',
        'quadrature': '📐',
        'residuals': '🧮',
        'mple': '📈',
        'covariance': '🧩',
        'gof': '🧪',
        'io': '💾',
        'error': '❌',
        'warning': '⚠️',
        'success': '✅',
        'info': 'ℹ️',
        'timing': '⏱️'
    }

    # Logger name fragment -> category
    MODULE_CATEGORIES = (
        ('sampler', 'sampler'),
        ('quadrature', 'quadrature'),
        ('residual', 'residuals'),
        ('mple', 'mple'),
        ('covariance', 'covariance'),
        ('gof', 'gof'),
        ('report_writer', 'io'),
        ('result_buffer', 'io'),
        ('pipeline', 'pipeline'),
        ('handler', 'pipeline'),
        ('main', 'pipeline'),
    )

    def __init__(self, use_colors: bool = True):
        super().__init__()
        self.use_colors = use_colors and sys.stdout.isatty()

    def format(self, record: logging.LogRecord) -> str:
        """Format log record with colors and icons."""
        timestamp = datetime.fromtimestamp(record.created).strftime('%H:%M:%S')
        category, icon = self._categorize_record(record)
        message = self._format_message(record, category)

        if self.use_colors:
            level_str = self._format_level(record.levelname)
            return f"{self.COLORS.get(record.levelname, '')}{timestamp} {icon} [{level_str}] {message}{self.COLORS['RESET']}"
        return f"{timestamp} {icon} [{record.levelname}] {message}"

    def _categorize_record(self, record: logging.LogRecord) -> tuple[str, str]:
        """Categorize log record and return category and appropriate icon."""
        if record.levelno >= logging.ERROR:
            return 'error', self.ICONS['error']
        elif record.levelno >= logging.WARNING:
            return 'warning', self.ICONS['warning']

        module_name = record.name.lower()
        for fragment, category in self.MODULE_CATEGORIES:
            if fragment in module_name:
                if category == 'pipeline' and 'completed in' in record.getMessage():
                    return 'timing', self.ICONS['timing']
                return category, self.ICONS[category]

        message = record.getMessage().lower()
        if 'completed in' in message:
            return 'timing', self.ICONS['timing']
        elif 'successfully' in message or 'converged' in message:
            return 'success', self.ICONS['success']

        return 'info', self.ICONS['info']

    def _format_level(self, level: str) -> str:
        level_map = {
            'DEBUG': 'DBG',
            'INFO': 'INF',
            'WARNING': 'WRN',
            'ERROR': 'ERR',
            'CRITICAL': 'CRT'
        }
        return level_map.get(level, level[:3])

    def _format_message(self, record: logging.LogRecord, category: str) -> str:
        message = record.getMessage()
        if category == 'timing':
            return self._format_timing_message(message)
        if record.exc_info and record.levelno >= logging.ERROR:
            return f"{message}\n{self.formatException(record.exc_info)}"
        return message

    def _format_timing_message(self, message: str) -> str:
        parts = message.split(' completed in ')
        if len(parts) == 2:
            operation = parts[0].replace('_', ' ').capitalize()
            return f"{operation} completed in {parts[1]}"
        return message


def setup_logging(level: str = 'INFO', use_colors: bool = True, log_dir: str = 'logs') -> None:
    """Setup logging configuration for the pipeline."""
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(PipelineFormatter(use_colors=use_colors))
    console_handler.setLevel(numeric_level)

    # File handlers are optional: a read-only working directory still gets console logs
    try:
        os.makedirs(log_dir, exist_ok=True)

        file_formatter = PipelineFormatter(use_colors=False)
        file_handler = logging.FileHandler(os.path.join(log_dir, 'gof-pipeline.log'), encoding='utf-8')
        file_handler.setFormatter(file_formatter)
        file_handler.setLevel(numeric_level)

        error_handler = logging.FileHandler(os.path.join(log_dir, 'error.log'), encoding='utf-8')
        error_handler.setFormatter(file_formatter)
        error_handler.setLevel(logging.ERROR)

        handlers = [console_handler, file_handler, error_handler]
    except OSError:
        handlers = [console_handler]

    logging.basicConfig(level=numeric_level, handlers=handlers, force=True)

    # Reduce noise from external libraries
    logging.getLogger('numexpr').setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance with the specified name."""
    return logging.getLogger(name)


class PipelineLogger:
    """Convenience logger methods for common pipeline operations."""

    def __init__(self, name: str):
        self.logger = get_logger(name)

    def stage_started(self, stage: str, details: str = None):
        if details:
            self.logger.info(f"Started {stage.replace('_', ' ')} ({details})")
        else:
            self.logger.info(f"Started {stage.replace('_', ' ')}")

    def fit_finished(self, iterations: int, gradient_norm: float, converged: bool):
        if converged:
            self.logger.info(f"MPLE converged in {iterations} iteration(s), |gradient| = {gradient_norm:.3e}")
        else:
            self.logger.warning(f"MPLE did not converge after {iterations} iteration(s), |gradient| = {gradient_norm:.3e}")

    def statistic(self, test: str, value: float, df: int, p_value: float):
        self.logger.info(f"{test} = {value:.6g} on {df} df, p-value {p_value:.4g}")

    def artifact_written(self, kind: str, path: str):
        self.logger.debug(f"Wrote {kind} → {path}")

    def timing(self, operation: str, seconds: float):
        minutes, rest = divmod(seconds, 60)
        elapsed = f"{int(minutes)}m {int(rest)}s" if minutes else f"{rest:.2f}s"
        self.logger.info(f"{operation.replace('_', ' ')} completed in {elapsed}")

    def error(self, operation: str, error: Exception, context: str = None):
        """Log errors with context."""
        if context:
            self.logger.error(f"Failed to {operation} ({context}): {error}")
        else:
            self.logger.error(f"Failed to {operation}: {error}")
