"""
Environment-driven settings.

환경변수:
- NETCHEMO_THREADS   : worker cap for independent runs (0 = auto)
- NETCHEMO_LOG_LEVEL : (선택) logging level, default INFO
- NETCHEMO_LOG_FILE  : (선택) append log records to this file as well
"""

import logging
import os
import sys
from typing import Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

NETCHEMO_THREADS = os.environ.get("NETCHEMO_THREADS", "0")
NETCHEMO_LOG_LEVEL = os.environ.get("NETCHEMO_LOG_LEVEL", "INFO")
NETCHEMO_LOG_FILE = os.environ.get("NETCHEMO_LOG_FILE")

logger = logging.getLogger("netchemo-settings")


def get_thread_count(raw: Optional[str] = None) -> int:
    """
    Resolve the worker cap.

    Args:
        raw: value to interpret instead of the environment (used by tests)

    Returns:
        int: number of workers, at least 1
    """
    raw = NETCHEMO_THREADS if raw is None else raw
    try:
        value = int(raw)
    except (TypeError, ValueError):
        logger.warning(f"Ignoring invalid NETCHEMO_THREADS={raw!r}, using auto")
        value = 0
    if value <= 0:
        return os.cpu_count() or 1
    return value


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Configure root logging once: stderr always, a file when requested."""
    level_name = (level or NETCHEMO_LOG_LEVEL).upper()
    handlers: list = [logging.StreamHandler(sys.stderr)]
    log_file = log_file or NETCHEMO_LOG_FILE
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode="a"))
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
    )
