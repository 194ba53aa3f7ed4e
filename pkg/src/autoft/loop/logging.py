"""Line-delimited JSON metrics log: one record per event."""

from __future__ import annotations

import json
import os
from typing import IO, Any

__all__ = ["MetricsLogger"]


class MetricsLogger:
    """Appends structured records to a .jsonl file (or swallows them if None)."""

    def __init__(self, path: str | os.PathLike | None):
        self._fh: IO[str] | None = None
        self.path = path
        if path is not None:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            self._fh = open(path, "a", encoding="utf-8")

    def log(self, record_type: str, **fields: Any) -> None:
        if self._fh is None:
            return
        record = {"type": record_type, **fields}
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "MetricsLogger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
