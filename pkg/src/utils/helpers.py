import time
from functools import wraps

from config.logging_config import PipelineLogger


def log_execution_time(func):
    """Decorator logging how long a pipeline method took, and whether it failed."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        # methods log under their class, plain functions under their module
        owner = args[0] if args and not isinstance(args[0], (int, float, str)) else None
        name = f"{type(owner).__module__}.{type(owner).__name__}" if owner is not None else func.__module__
        logger = PipelineLogger(name)

        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.error(f"{func.__name__} (failed after {format_duration(time.perf_counter() - start_time)})", e)
            raise
        logger.timing(func.__name__, time.perf_counter() - start_time)
        return result
    return wrapper


def format_duration(seconds: float) -> str:
    """Human-readable duration: ``0.42s``, ``3m 5s`` or ``2h 10m``."""
    if seconds < 60:
        return f"{seconds:.2f}s"
    seconds = int(seconds)
    if seconds < 3600:
        minutes, rest = divmod(seconds, 60)
        return f"{minutes}m {rest}s" if rest else f"{minutes}m"
    hours, rest = divmod(seconds, 3600)
    minutes = rest // 60
    return f"{hours}h {minutes}m" if minutes else f"{hours}h"


def format_count(count: int, singular: str, plural: str = None) -> str:
    """Format count with proper singular/plural form."""
    if plural is None:
        plural = f"{singular}s"
    return f"{count} {singular if count == 1 else plural}"


def parse_vector(text: str) -> list[float]:
    """Parse a comma-separated list of reals such as ``"1, 1, 0.5"``."""
    items = [item.strip() for item in str(text).split(',')]
    return [float(item) for item in items if item]
