import logging
from typing import Optional
from typing import TextIO

LOGGER_NAME = "FSLLN"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def log_format(lvl: int) -> str:
    # replicas log from pool threads, name the thread once debug output is on
    if lvl <= logging.DEBUG:
        return "%(asctime)s %(levelname)s [%(threadName)s]: %(message)s"
    return "%(asctime)s %(levelname)s: %(message)s"


def configure_logger(lvl: int) -> logging.Logger:
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(lvl)

    # stderr only, stdout carries artifacts
    handler = logging.StreamHandler()
    handler.setLevel(lvl)
    handler.setFormatter(logging.Formatter(log_format(lvl), DATE_FORMAT))

    global prev_handler
    if prev_handler is not None:
        logger.removeHandler(prev_handler)
    prev_handler = handler
    logger.addHandler(handler)
    return logger


prev_handler: Optional['logging.StreamHandler[TextIO]'] = None
logger = configure_logger(logging.INFO)
