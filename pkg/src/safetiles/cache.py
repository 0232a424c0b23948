"""Write-through on-disk cache for tile ratings and explanations.

The backing store is an append-only JSONL log: one ``{"key": ..., "record":
...}`` object per line, last write wins. It is reloaded at boot, so cached
ratings survive process restarts. Keys quantize the square's center to the
micro-degree, and fold in the persona digest, the local hour bucket, and
the active template digest: changing any of those changes the key.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

from .geogrid import Square

logger = logging.getLogger(__name__)


def cache_key(
    square: Square, side_m: float, persona_digest: str, hour_bucket: int, template_digest: str
) -> str:
    center = square.center
    return (
        f"{center.lat:.6f},{center.lon:.6f},{side_m:g}"
        f"|{persona_digest}|h{hour_bucket:02d}|{template_digest}"
    )


def explanation_key(rating_key: str) -> str:
    return rating_key + "|explanation"


class TileCache:
    """Concurrent map with a write-through JSONL log (``path=None`` keeps it
    memory-only)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[str, dict] = {}
        if self.path and self.path.is_file():
            self._load()

    def _load(self):
        loaded = 0
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    item = json.loads(line)
                    self._data[item["key"]] = item["record"]
                    loaded += 1
                except (json.JSONDecodeError, KeyError, TypeError):
                    logger.warning("skipping corrupt cache line in %s", self.path)
        logger.info("cache loaded: %d records from %s", loaded, self.path)

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, record: dict):
        line = json.dumps({"key": key, "record": record}, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._data[key] = record
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)
