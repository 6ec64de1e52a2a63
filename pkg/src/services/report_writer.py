import json
import os
import time
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from config.logging_config import PipelineLogger
from config.schemas import DEFAULT_MARK, MARK_COLUMN, point_columns
from core.geometry import Configuration, Cube
from utils.exceptions import GofError, PatternIOError
from utils.helpers import format_count, format_duration


class ReportWriter:
    """Reads point patterns and writes CSV/JSON artifacts into one output directory."""

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        self.logger = PipelineLogger(__name__)

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _ensure_dir(self):
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            raise PatternIOError(f"cannot create output directory '{self.output_dir}': {e}") from e

    def _log_transfer(self, operation: str, start_time: float, records_count: int, target: str):
        elapsed = format_duration(time.perf_counter() - start_time)
        self.logger.logger.info(f"{operation}: {format_count(records_count, 'record')} via '{target}' in {elapsed}")

    def read_pattern(self, path: str, dimension: int = 2, window: Optional[Cube] = None) -> Configuration:
        """Load a CSV pattern with header ``x,y[,z][,mark]``."""
        start_time = time.perf_counter()
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise PatternIOError(f"cannot read point pattern '{path}': {e}", path=path) from e

        columns = point_columns(dimension, with_mark=False)
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise PatternIOError(f"point pattern '{path}' lacks coordinate column(s) {missing}", path=path)
        try:
            positions = frame[columns].to_numpy(dtype=float)
            marks = frame[MARK_COLUMN].to_numpy(dtype=np.int64) if MARK_COLUMN in frame.columns \
                else np.full(len(frame), DEFAULT_MARK, dtype=np.int64)
        except (ValueError, TypeError) as e:
            raise PatternIOError(f"point pattern '{path}' has non-numeric values: {e}", path=path) from e

        try:
            config = Configuration(positions, marks, window, dimension=dimension)
        except GofError as e:
            raise PatternIOError(f"point pattern '{path}' is invalid: {e}", path=path) from e
        if window is not None and len(config) and not np.all(window.contains(config.positions)):
            outside = int((~window.contains(config.positions)).sum())
            self.logger.logger.warning(f"{outside} point(s) of '{path}' lie outside the observed window")
        self._log_transfer("Pattern load", start_time, len(config), path)
        return config

    def write_pattern(self, config: Configuration, name: str) -> str:
        start_time = time.perf_counter()
        self._ensure_dir()
        frame = pd.DataFrame(config.positions, columns=point_columns(config.dimension, with_mark=False))
        frame[MARK_COLUMN] = config.marks
        path = self._path(name)
        try:
            frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        except OSError as e:
            raise PatternIOError(f"cannot write '{path}': {e}", path=path) from e
        self.logger.artifact_written("pattern", path)
        self.logger.logger.debug(f"Pattern of {format_count(len(config), 'point')} written in "
                                 f"{format_duration(time.perf_counter() - start_time)}")
        return path

    def write_frame(self, frame: pd.DataFrame, name: str) -> str:
        start_time = time.perf_counter()
        self._ensure_dir()
        path = self._path(name)
        try:
            frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        except OSError as e:
            raise PatternIOError(f"cannot write '{path}': {e}", path=path) from e
        self._log_transfer("Table export", start_time, len(frame), path)
        return path

    def write_json(self, payload: Dict[str, Any], name: str) -> str:
        self._ensure_dir()
        path = self._path(name)
        try:
            with open(path, 'w', encoding='utf-8') as handle:
                json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default, allow_nan=True)
                handle.write('\n')
        except OSError as e:
            raise PatternIOError(f"cannot write '{path}': {e}", path=path) from e
        self.logger.artifact_written("report", path)
        return path


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
