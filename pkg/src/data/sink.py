"""
Append-only CSV metric log (step, lr, train_l1, val_psnr).
"""

import csv
import logging
import math
import threading
from pathlib import Path
from typing import List, Optional

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["step", "lr", "train_l1", "val_psnr"]


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.6g}"
    return str(value)


class MetricSink:
    """
    Thread-safe metric writer. Rows are flushed as they arrive so a crashed
    run still leaves a readable log.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.rows: List[dict] = []
        with open(self.path, "w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow(METRIC_COLUMNS)

    def log(self, step: int, lr: float, train_l1: Optional[float] = None, val_psnr: Optional[float] = None):
        row = {'step': step, 'lr': lr, 'train_l1': train_l1, 'val_psnr': val_psnr}
        with self._lock:
            self.rows.append(row)
            with open(self.path, "a", newline="", encoding="utf-8") as f:
                csv.writer(f).writerow([_format(row[c]) for c in METRIC_COLUMNS])


def read_metrics(path) -> List[dict]:
    """Parse a metric CSV back into dicts with numeric values (None for blanks)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for raw in csv.DictReader(f):
            row = {'step': int(raw['step'])}
            for column in METRIC_COLUMNS[1:]:
                row[column] = float(raw[column]) if raw[column] else None
            rows.append(row)
    return rows
