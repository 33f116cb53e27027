"""Loggers for reconstruction runs.

``RunLogger`` acts like a standard Python ``logging.Logger``,
but includes the scenario name in each message and handles a ``subtype`` keyword:
``logger.info("message", subtype="fem")`` is emitted as ``"[S1] message [odenc.fem]"``.

Records that carry a ``stats`` mapping (passed as ``logger.info(msg, stats={...})``)
can additionally be written as JSON lines by ``JsonLinesHandler``.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import IO, Any, Union

DEFAULT_LOG_TYPE = "odenc"


class RunLogger(logging.LoggerAdapter):
    """Wraps a logger, adding the scenario name and ``type.subtype`` to messages."""

    def __init__(self, logger: logging.Logger, scenario: str, type_name: str = DEFAULT_LOG_TYPE):
        super().__init__(logger, {"scenario": scenario, "type": type_name, "stats": None})

    def process(self, msg, kwargs):
        extra = dict(self.extra)  # type: ignore[arg-type]
        subtype = ("." + kwargs.pop("subtype")) if "subtype" in kwargs else ""
        if "stats" in kwargs:
            extra["stats"] = kwargs.pop("stats")
        kwargs["extra"] = extra
        return f"[{extra['scenario']}] {msg} [{extra['type']}{subtype}]", kwargs


class JsonLinesHandler(logging.Handler):
    """Write the ``stats`` of log records as one JSON object per line.

    Records without stats are ignored.
    """

    def __init__(self, stream: IO[str] | str | Path) -> None:
        """Initialize a new handler, on an open text stream or a file path."""
        super().__init__()
        if isinstance(stream, (str, Path)):
            self._stream: IO[str] = open(stream, "a", encoding="utf8")
            self._owns_stream = True
        else:
            self._stream = stream
            self._owns_stream = False

    def emit(self, record: logging.LogRecord) -> None:
        """Handle a log record."""
        stats = getattr(record, "stats", None)
        if not stats:
            return
        payload: dict[str, Any] = {
            "level": record.levelname,
            "logger": record.name,
            "scenario": getattr(record, "scenario", None),
            **stats,
        }
        try:
            self._stream.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
            self._stream.flush()
        except Exception:  # pragma: no cover
            self.handleError(record)

    def close(self) -> None:
        if self._owns_stream:
            self._stream.close()
        super().close()


def get_run_logger(name: str, scenario: str) -> RunLogger:
    """Return a ``RunLogger`` for a module logger name."""
    return RunLogger(logging.getLogger(name), scenario)


LoggerType = Union[logging.Logger, RunLogger]
