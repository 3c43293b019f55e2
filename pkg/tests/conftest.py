import logging
import pytest
from logger import configure_logger


@pytest.fixture(autouse=True)
def reset_logger():
    # parse_args swaps the stderr handler, bind it back once capture is undone
    yield
    configure_logger(logging.INFO)
