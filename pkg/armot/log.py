"""
Konfiguracja logowania (loguru). Poziom pochodzi ze zmiennej ARMOT_LOG_LEVEL.
"""

import os
import sys

from loguru import logger

from armot.errors import ConfigError

LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")


def configure_logging(level=None):
    """
    Ustawia jedno wyjście logów na stderr.

    Args:
        level: Nazwa poziomu; gdy None, brana jest ze zmiennej ARMOT_LOG_LEVEL (domyślnie INFO)

    Returns:
        Nazwa użytego poziomu
    """
    level = (level or os.environ.get("ARMOT_LOG_LEVEL", "INFO")).upper()
    if level not in LEVELS:
        raise ConfigError(f"Nieznany poziom logowania: {level}")

    logger.remove()
    logger.add(sys.stderr, level=level,
               format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {name}:{line} - {message}")
    return level
