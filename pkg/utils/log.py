from __future__ import annotations

import logging
import sys

LOG_FORMAT = "[%(name)s] %(message)s"


def setup_logging(level: str | int = "INFO") -> None:
    """
    Configura el logging de consola una sola vez (lo llama la CLI).
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger()
    root.setLevel(level)

    for h in list(root.handlers):
        if getattr(h, "_ckdlab", False):
            root.removeHandler(h)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._ckdlab = True  # type: ignore[attr-defined]
    root.addHandler(handler)
