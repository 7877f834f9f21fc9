import csv
import hashlib
import logging
import os
import threading
from dataclasses import asdict, dataclass, fields

import pandas as pd

from layers.NTriples import serialize_ntriple

logger = logging.getLogger(__name__)


class DigestMismatchError(RuntimeError):
    pass


@dataclass
class Measurement:
    operator_id: str
    window_seq: int
    triples: int
    eval_millis: float
    kb_triples_touched: int
    engine_id: str


MEASUREMENT_FIELDS = [f.name for f in fields(Measurement)]


class MetricsSink:
    """Per-window measurements, kept in memory and optionally appended to a CSV file."""

    def __init__(self, path=None):
        self.path = path
        self.rows = []
        self._lock = threading.Lock()
        self._file = None
        self._writer = None
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            self._file = open(path, "w", newline="", encoding="utf-8")
            self._writer = csv.DictWriter(self._file, fieldnames=MEASUREMENT_FIELDS)
            self._writer.writeheader()

    def record(self, m: Measurement):
        with self._lock:
            self.rows.append(m)
            if self._writer is not None:
                self._writer.writerow(asdict(m))
                self._file.flush()

    def to_frame(self):
        with self._lock:
            return pd.DataFrame([asdict(m) for m in self.rows], columns=MEASUREMENT_FIELDS)

    def close(self):
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None
                self._writer = None


def summarize(frame):
    """Mean and median per-window evaluation time per operator."""
    if frame.empty:
        return pd.DataFrame(columns=["operator_id", "windows", "mean_millis", "median_millis", "kb_triples_touched"])
    grouped = frame.groupby("operator_id")
    return pd.DataFrame({
        "windows": grouped["window_seq"].count(),
        "mean_millis": grouped["eval_millis"].mean(),
        "median_millis": grouped["eval_millis"].median(),
        "kb_triples_touched": grouped["kb_triples_touched"].mean(),
    }).reset_index()


def canonical_event(event):
    return "\n".join(sorted(serialize_ntriple(t) for t in event.plain_triples()))


def result_digest(events):
    """Order-independent hash of a result stream; graph ids and timestamps do not count."""
    h = hashlib.sha256()
    for text in sorted(canonical_event(e) for e in events):
        h.update(text.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()
