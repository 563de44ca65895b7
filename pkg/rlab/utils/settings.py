import os
import logging
from dotenv import load_dotenv

load_dotenv(override=True)

LOG_LEVEL = os.getenv("RLAB_LOG", "info").lower()
DEFAULT_THREADS = int(os.getenv("RLAB_THREADS", "0"))
DEFAULT_OUT_DIR = os.getenv("RLAB_OUT_DIR", "reports")
DEFAULT_SEED = int(os.getenv("RLAB_SEED", "0"))

_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def log_level(name: str = None) -> int:
    """Map an RLAB_LOG value to a logging level (unknown names fall back to INFO)."""
    return _LEVELS.get((name or LOG_LEVEL).lower(), logging.INFO)
