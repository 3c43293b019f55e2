import logging
import threading
from logger import LOGGER_NAME, configure_logger


def handlers():
    return logging.getLogger(LOGGER_NAME).handlers


class TestConfigureLogger:
    def test_single_handler(self):
        configure_logger(logging.INFO)
        configure_logger(logging.DEBUG)
        assert len(handlers()) == 1
        assert handlers()[0].level == logging.DEBUG

    def test_debug_names_thread(self):
        configure_logger(logging.DEBUG)
        record = logging.LogRecord(LOGGER_NAME, logging.DEBUG, __file__, 1, "replica 3 done", None, None)
        assert f"[{threading.current_thread().name}]: replica 3 done" in handlers()[0].format(record)

    def test_info_omits_thread(self):
        configure_logger(logging.INFO)
        record = logging.LogRecord(LOGGER_NAME, logging.INFO, __file__, 1, "running slln", None, None)
        line = handlers()[0].format(record)
        assert line.endswith("INFO: running slln")
        assert threading.current_thread().name not in line
