"""Logging for the worker and lifecycle command-line entry points."""

from __future__ import annotations

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import TextIO

LOG_FORMAT = "[%(asctime)s] %(name)s %(levelname)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(
    data_dir: str | Path,
    name: str,
    stream: TextIO | None = None,
    level: int = logging.INFO,
) -> logging.Logger:
    """Console plus rotating file {data_dir}/logs/{name}.log on the "pbt" logger.

    Calling again replaces the handlers installed by the previous call.
    """
    logger = logging.getLogger("pbt")
    logger.setLevel(level)
    for handler in [h for h in logger.handlers if getattr(h, "_pbt_runner", False)]:
        logger.removeHandler(handler)
        handler.close()

    fmt = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console = logging.StreamHandler(stream or sys.stderr)
    console.setFormatter(fmt)

    log_dir = Path(data_dir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(
        log_dir / f"{name}.log",
        maxBytes=10 * 1024 * 1024,  # 10 MB
        backupCount=5,
        encoding="utf-8",
    )
    file_handler.setFormatter(fmt)

    for handler in (console, file_handler):
        handler._pbt_runner = True  # type: ignore[attr-defined]
        logger.addHandler(handler)
    return logger
