import sys

import pytest
from loguru import logger

from src.utils.logger import get_logger, setup_logger


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


def read_latest(directory):
    logger.remove()
    with open(directory / "latest.log", "r", encoding="utf-8") as handle:
        return handle.read()


def test_records_carry_the_command(tmp_path):
    setup_logger(str(tmp_path), "INFO", command="detect")
    get_logger().info("clusters found")
    text = read_latest(tmp_path)
    assert "| detect |" in text
    assert "clusters found" in text
    assert any(p.name.startswith("aee_ts_") for p in tmp_path.iterdir())


def test_latest_log_only_holds_the_last_invocation(tmp_path):
    setup_logger(str(tmp_path), "INFO", command="gen")
    get_logger().info("first run")
    setup_logger(str(tmp_path), "INFO", command="train")
    get_logger().info("second run")
    text = read_latest(tmp_path)
    assert "second run" in text
    assert "first run" not in text


def test_level_filters_and_is_validated(tmp_path):
    setup_logger(str(tmp_path), "warning")
    get_logger().info("hidden")
    get_logger().warning("shown")
    text = read_latest(tmp_path)
    assert "shown" in text and "hidden" not in text
    assert "| - |" in text
    with pytest.raises(ValueError):
        setup_logger(str(tmp_path), "VERBOSE")
