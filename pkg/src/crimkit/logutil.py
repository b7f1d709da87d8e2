"""Structured logging: one JSON object per line on stderr."""

from __future__ import annotations

import json
import sys
import time

LEVELS = {"debug": 10, "info": 20, "warning": 30, "error": 40}


class JsonLogger:
    def __init__(self, name: str, level: str = "info", stream=None):
        if level not in LEVELS:
            raise ValueError(f"unknown log level {level!r}")
        self.name = name
        self.level = LEVELS[level]
        self.stream = stream or sys.stderr

    def _emit(self, level: str, event: str, **fields):
        if LEVELS[level] < self.level:
            return
        rec = {"ts": round(time.time(), 3), "level": level, "logger": self.name,
               "event": event}
        rec.update(fields)
        self.stream.write(json.dumps(rec) + "\n")
        self.stream.flush()

    def debug(self, event, **f):
        self._emit("debug", event, **f)

    def info(self, event, **f):
        self._emit("info", event, **f)

    def warning(self, event, **f):
        self._emit("warning", event, **f)

    def error(self, event, **f):
        self._emit("error", event, **f)


def get_logger(name: str, level: str = "info") -> JsonLogger:
    return JsonLogger(name, level)
