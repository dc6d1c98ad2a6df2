"""
This module sets up logging for langdepth runs: a colored console, an
optional rotating JSON file, and the run id that ties the lines of one
``train``/``eval``/``ablate``/``converge`` invocation together.
"""

import json
import logging
import logging.handlers
import re
import uuid
from datetime import datetime, timezone
from pathlib import Path
from types import TracebackType
from typing import Any, Dict, List, Mapping, Optional, Tuple, cast

from termcolor import colored

DEFAULT_LOG_CONFIG: Dict[str, Any] = {
    "level": "INFO",
    "format": "%(asctime)s - %(levelname)s - %(message)s",
    "file": {
        "enabled": False,
        "path": "logs/langdepth.log",
        "max_size": 10485760,  # 10MB
        "backup_count": 5,
        "format": "json",
    },
}

# Third-party loggers kept at ERROR
QUIET_LOGGERS = ("PIL", "PIL.Image", "PIL.PngImagePlugin")

LEVEL_COLORS = {
    "DEBUG": "blue",
    "INFO": "white",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "red",
}

_COMPONENT = re.compile(r"^\[([a-z-]+)\]")


class ColoredFormatter(logging.Formatter):
    """Console formatter that colors the level name."""

    def format(self, record: logging.LogRecord) -> str:
        copy = logging.makeLogRecord(record.__dict__)
        color = LEVEL_COLORS.get(record.levelname)
        if color is not None:
            attrs = ["bold"] if record.levelno >= logging.ERROR else None
            copy.levelname = colored(record.levelname, color, attrs=attrs)
        return super().format(copy)


class JsonFormatter(logging.Formatter):
    """
    One JSON object per line.

    Besides the message and its source location, a line carries the run
    id, the ``[component]`` tag of the message when it has one, the
    ``metrics`` extra of training records and any exception.
    """

    def format(self, record: logging.LogRecord) -> str:
        message = record.getMessage()
        match = _COMPONENT.match(message)
        entry: Dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "run_id": getattr(record, "run_id", None),
            "component": match.group(1) if match else None,
            "message": message,
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }
        metrics = getattr(record, "metrics", None)
        if metrics is not None:
            entry["metrics"] = metrics

        if record.exc_info:
            ExcInfo = Tuple[type, BaseException, Optional[TracebackType]]
            exc_info = cast(ExcInfo, record.exc_info)
            entry["exception"] = {
                "type": exc_info[0].__name__,
                "message": str(exc_info[1]),
                "traceback": self.formatException(exc_info),
            }
        return json.dumps(entry)


class RunFilter(logging.Filter):
    """Stamps every record with the current run id."""

    def __init__(self) -> None:
        super().__init__()
        self.run_id: Optional[str] = None

    def filter(self, record: logging.LogRecord) -> bool:
        if self.run_id is not None:
            record.run_id = self.run_id
        return True


_RUN_FILTER = RunFilter()


def get_log_config(
    section: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Merge a ``logging`` config section over the defaults.

    The ``file`` sub-section is merged key by key, so a config that only
    sets ``file.enabled`` keeps the default path and rotation.

    Args:
        section: The ``logging`` section of the loaded config, if any.

    Returns:
        A fresh mapping; the defaults are never modified.
    """
    config = json.loads(json.dumps(DEFAULT_LOG_CONFIG))
    for key, value in (section or {}).items():
        if key == "file" and isinstance(value, Mapping):
            config["file"].update(value)
        else:
            config[key] = value
    return config


def _file_handler(settings: Mapping[str, Any], fmt: str) -> logging.Handler:
    path = Path(settings["path"])
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.handlers.RotatingFileHandler(
        filename=path,
        maxBytes=int(settings["max_size"]),
        backupCount=int(settings["backup_count"]),
    )
    if str(settings["format"]).lower() == "json":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter(fmt))
    return handler


def setup_logging(section: Optional[Mapping[str, Any]] = None) -> None:
    """
    Replace the root logger's handlers with the configured ones.

    Args:
        section: The ``logging`` section of the loaded config, if any.
    """
    config = get_log_config(section)
    level = getattr(logging, str(config["level"]).upper())

    root = logging.getLogger()
    root.setLevel(level)
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()

    console = logging.StreamHandler()
    console.setFormatter(ColoredFormatter(config["format"]))
    handlers: List[logging.Handler] = [console]
    if config["file"]["enabled"]:
        handlers.append(_file_handler(config["file"], config["format"]))
    for handler in handlers:
        handler.setLevel(level)
        handler.addFilter(_RUN_FILTER)
        root.addHandler(handler)

    for name in QUIET_LOGGERS:
        quiet = logging.getLogger(name)
        quiet.setLevel(logging.ERROR)
        quiet.propagate = False


def get_run_id() -> Optional[str]:
    """The run id attached to log records, if one is set."""
    return _RUN_FILTER.run_id


def set_run_id(run_id: Optional[str] = None) -> str:
    """
    Start tagging log records with a run id.

    Args:
        run_id: The id to use; 12 random hex digits when None.

    Returns:
        The id now in effect.
    """
    if run_id is None:
        run_id = uuid.uuid4().hex[:12]
    _RUN_FILTER.run_id = run_id
    return run_id
