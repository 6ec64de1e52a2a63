import threading
from typing import Any, Dict

import pandas as pd

from config.schemas import CALIBRATION_COLUMNS


class ResultBuffer:
    """Thread-safe buffer collecting per-replicate calibration rows."""

    def __init__(self):
        self._lock = threading.Lock()
        self._init_buffers()

    def _init_buffers(self):
        """Initialize all data buffers."""
        self.calibration_buffer = pd.DataFrame(columns=CALIBRATION_COLUMNS)
        self._rows = []

    def add_replicate(self, row: Dict[str, Any]):
        """Add one replicate outcome to the buffer."""
        with self._lock:
            self._rows.append({column: row.get(column) for column in CALIBRATION_COLUMNS})

    def get_calibration(self) -> pd.DataFrame:
        """Buffered rows ordered by replicate index."""
        with self._lock:
            if self._rows:
                new_data = pd.DataFrame(self._rows, columns=CALIBRATION_COLUMNS)
                if self.calibration_buffer.empty:
                    self.calibration_buffer = new_data
                else:
                    self.calibration_buffer = pd.concat([self.calibration_buffer, new_data], ignore_index=True)
                self._rows = []
            return self.calibration_buffer.sort_values('replicate', kind='stable').reset_index(drop=True).copy()

    def clear_calibration(self):
        with self._lock:
            self._init_buffers()

    def __len__(self) -> int:
        with self._lock:
            return len(self.calibration_buffer) + len(self._rows)
