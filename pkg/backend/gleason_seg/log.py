"""Logging configuration for CLI entry points.

Library modules only call ``logging.getLogger(__name__)``; handlers are
installed here, once, by whatever process owns stderr.
"""

from __future__ import annotations

import logging
import os
import sys

try:
    from pythonjsonlogger.json import JsonFormatter
except ImportError:  # python-json-logger < 3.1
    from pythonjsonlogger.jsonlogger import JsonFormatter  # type: ignore[no-redef]

LOG_LEVEL_ENV = "GLEASON_SEG_LOG_LEVEL"
PLAIN_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
JSON_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def default_level() -> str:
    """Return the log level from $GLEASON_SEG_LOG_LEVEL, falling back to INFO."""
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


def configure_logging(level: str | int | None = None, json_format: bool = False) -> logging.Handler:
    """Route all ``gleason_seg`` records to stderr, one line per record.

    Args:
        level: Logging level name or number. Defaults to ``default_level()``.
        json_format: Emit JSON objects instead of plain text lines.

    Returns:
        The installed handler (useful for removing it again in tests).
    """
    handler = logging.StreamHandler(sys.stderr)
    formatter: logging.Formatter = JsonFormatter(JSON_FORMAT) if json_format else logging.Formatter(PLAIN_FORMAT)
    handler.setFormatter(formatter)

    root = logging.getLogger("gleason_seg")
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level if level is not None else default_level())
    root.propagate = False
    return handler
