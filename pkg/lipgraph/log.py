"""Package logger setup.

Use ``configure_logging()`` once from the entry point, or set the
``LIPGRAPH_LOG`` environment variable to one of DEBUG, INFO, WARNING, ERROR
(or a numeric level) to only receive logs of that level and higher.
"""

import logging
import os
from typing import Optional, Union

ENV_VAR = "LIPGRAPH_LOG"
DEFAULT_LEVEL = logging.WARNING

HANDLER = logging.StreamHandler()
FORMATTER = logging.Formatter('[%(levelname)s] %(filename)s - %(lineno)d - %(message)s')
HANDLER.setFormatter(FORMATTER)

LOGGER = logging.getLogger('lipgraph')


def parse_level(value: Union[str, int, None]) -> int:
    if value is None or value == "":
        return DEFAULT_LEVEL
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if text.isdigit():
        return int(text)
    level = logging.getLevelName(text.upper())
    if isinstance(level, int):
        return level
    LOGGER.warning("Unknown log level %r in %s, using WARNING", value, ENV_VAR)
    return DEFAULT_LEVEL


def configure_logging(level: Union[str, int, None] = None) -> logging.Logger:
    """Attach the package handler and set the level.

    An explicit ``level`` wins over ``LIPGRAPH_LOG``.
    """
    if HANDLER not in LOGGER.handlers:
        LOGGER.addHandler(HANDLER)
    resolved: Optional[Union[str, int]] = level if level is not None else os.environ.get(ENV_VAR)
    LOGGER.setLevel(parse_level(resolved))
    return LOGGER
