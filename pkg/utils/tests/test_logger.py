"""
Tests for logger setup.
"""

import logging
from logging.handlers import RotatingFileHandler

import pytest

from utils.logger import ROOT_LOGGER, get_logger, setup_logger


class TestLogger:
    """Test suite for the logging helpers."""

    @pytest.mark.core
    def test_names_nest_under_root(self):
        """Test module loggers live under the mcpst hierarchy."""
        assert get_logger("dataio.series").name == f"{ROOT_LOGGER}.dataio.series"
        assert get_logger(f"{ROOT_LOGGER}.cli").name == f"{ROOT_LOGGER}.cli"
        assert get_logger().name == ROOT_LOGGER

    @pytest.mark.core
    def test_file_handler_receives_records(self, tmp_path):
        """Test a configured log file receives messages at the console level."""
        log_file = tmp_path / "run.log"
        logger = setup_logger(f"{ROOT_LOGGER}.logtest", "INFO", log_file)

        logger.info("stage boundary")
        for handler in logger.handlers:
            handler.flush()

        assert "stage boundary" in log_file.read_text(encoding="utf-8")
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)

    @pytest.mark.core
    def test_file_keeps_debug_below_console_level(self, tmp_path):
        """Test DEBUG records reach the file while the console stays at INFO."""
        log_file = tmp_path / "debug.log"
        logger = setup_logger(f"{ROOT_LOGGER}.debugtest", "INFO", log_file)
        console = next(h for h in logger.handlers if not isinstance(h, RotatingFileHandler))

        logger.debug("per-epoch detail")
        for handler in logger.handlers:
            handler.flush()

        assert "per-epoch detail" in log_file.read_text(encoding="utf-8")
        assert logger.level == logging.DEBUG
        assert console.level == logging.INFO
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)
