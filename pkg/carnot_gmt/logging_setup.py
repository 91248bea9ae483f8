"""Stream handler for the carnot_gmt logger (stderr; stdout carries command reports)."""

import logging
import sys
from typing import Optional, Union

from carnot_gmt.errors import UsageError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_HANDLER_NAME = "carnot_gmt.stderr"


def configure_logging(level: Optional[Union[str, int]] = None) -> logging.Logger:
    """(Re)install the single stderr handler on the current sys.stderr and set the package level"""
    if level is None:
        from carnot_gmt.config import get_settings

        level = get_settings().log_level
    if isinstance(level, str):
        resolved = logging.getLevelName(level.strip().upper())
        if not isinstance(resolved, int):
            raise UsageError(f"Unknown log level {level!r}")
        level = resolved

    logger = logging.getLogger("carnot_gmt")
    logger.setLevel(level)
    for old in [h for h in logger.handlers if h.get_name() == _HANDLER_NAME]:
        logger.removeHandler(old)
    handler = logging.StreamHandler(sys.stderr)
    handler.set_name(_HANDLER_NAME)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    return logger
