"""Shared event-log record used by the gateway and the emulator.

Levels mirror the UI's color-coded log classes: error, connection, command,
response, plus `action` for local UI/engine happenings.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

LOG_LEVELS = ("error", "connection", "command", "response", "action")


def now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class LogEntry:
    timestamp: int  # unix milliseconds
    level: str
    message: str

    def __post_init__(self):
        if self.level not in LOG_LEVELS:
            raise ValueError(f"bad log level: {self.level!r}")

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "level": self.level, "message": self.message}

    def to_ndjson(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class EventLog:
    """Append-only, cursor-readable log; safe for concurrent writers/readers."""

    def __init__(self, sink=None, clock=now_ms):
        self._entries: list[LogEntry] = []
        self._lock = threading.Lock()
        self._sink = sink  # optional writable text stream for NDJSON mirroring
        self._clock = clock

    def append(self, level: str, message: str, timestamp: int | None = None) -> LogEntry:
        entry = LogEntry(
            timestamp=self._clock() if timestamp is None else timestamp,
            level=level,
            message=message,
        )
        with self._lock:
            self._entries.append(entry)
            if self._sink is not None:
                self._sink.write(entry.to_ndjson() + "\n")
                self._sink.flush()
        return entry

    def entries(self) -> list[LogEntry]:
        with self._lock:
            return list(self._entries)

    def since(self, timestamp_ms: int) -> list[LogEntry]:
        """Entries strictly newer than timestamp_ms."""
        with self._lock:
            return [e for e in self._entries if e.timestamp > timestamp_ms]

    def read_from(self, cursor: int) -> tuple[list[LogEntry], int]:
        """Entries at positions >= cursor, plus the next cursor."""
        with self._lock:
            chunk = self._entries[cursor:]
            return chunk, cursor + len(chunk)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
