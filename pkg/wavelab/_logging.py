import logging
from enum import IntEnum
from typing import Any, Union

import click


class LogLevel(IntEnum):
    ERROR = logging.ERROR
    WARNING = logging.WARNING
    SUCCESS = logging.INFO + 1
    INFO = logging.INFO
    DEBUG = logging.DEBUG


logging.addLevelName(LogLevel.SUCCESS.value, LogLevel.SUCCESS.name)

DEFAULT_LOG_LEVEL = LogLevel.INFO.name
CLICK_STYLE_KWARGS: dict[int, dict[str, Any]] = {
    LogLevel.ERROR: dict(fg="bright_red"),
    LogLevel.WARNING: dict(fg="bright_red"),
    LogLevel.SUCCESS: dict(fg="bright_green"),
    LogLevel.INFO: dict(fg="blue"),
    LogLevel.DEBUG: dict(fg="blue"),
}


class ClickHandler(logging.Handler):
    """
    Echo records through ``click`` so the level name is coloured
    the same way in every terminal.
    """

    def emit(self, record: logging.LogRecord):
        try:
            style = CLICK_STYLE_KWARGS.get(record.levelno, {})
            level = click.style(f"{record.levelname}:", **style)
            click.echo(f"{level} {record.getMessage()}", err=True)
        except Exception:
            self.handleError(record)


class WaveLabLogger:
    """
    Thin wrapper around the ``wavelab`` stdlib logger.
    """

    def __init__(self, name: str = "wavelab"):
        self._logger = logging.getLogger(name)
        if not any(isinstance(h, ClickHandler) for h in self._logger.handlers):
            self._logger.addHandler(ClickHandler())

        self._logger.propagate = False
        self.set_level(DEFAULT_LOG_LEVEL)

    @property
    def level(self) -> int:
        return self._logger.level

    def set_level(self, level: Union[str, int]):
        if isinstance(level, str):
            level = LogLevel[level.upper()]

        self._logger.setLevel(int(level))

    def debug(self, message: str, *args):
        self._logger.debug(message, *args)

    def info(self, message: str, *args):
        self._logger.info(message, *args)

    def success(self, message: str, *args):
        self._logger.log(LogLevel.SUCCESS, message, *args)

    def warning(self, message: str, *args):
        self._logger.warning(message, *args)

    def error(self, message: str, *args):
        self._logger.error(message, *args)


logger = WaveLabLogger()

__all__ = ["LogLevel", "logger"]
