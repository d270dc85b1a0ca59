"""
Logging configuration for the robust aggregation lab.
"""
import logging
import logging.config
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import orjson

from clusteragg.core.config import settings

# Structured fields promoted from ``extra=`` into JSON records
STRUCTURED_FIELDS = (
    "run_id",
    "cell",
    "rule",
    "attack",
    "seed",
    "round",
    "criterion",
    "status",
    "duration",
    "category",
)


class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON."""
        log_data: Dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        for key in STRUCTURED_FIELDS:
            if hasattr(record, key):
                log_data[key] = getattr(record, key)

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return orjson.dumps(log_data, default=str).decode()


def setup_logging(
    level: Optional[str] = None,
    json_output: Optional[bool] = None,
    log_file: Optional[Path] = None,
) -> None:
    """Setup logging configuration; arguments default to ``settings``."""
    log_level = (level or ("DEBUG" if settings.debug else settings.log_level)).upper()
    use_json = settings.log_json if json_output is None else json_output
    file_path = log_file or settings.log_file

    formatters = {
        "detailed": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S"
        },
        "json": {
            "()": "clusteragg.core.logging_config.JSONFormatter"
        }
    }

    handlers: Dict[str, Any] = {
        "console": {
            "class": "logging.StreamHandler",
            "level": log_level,
            "formatter": "json" if use_json else "detailed",
            "stream": "ext://sys.stderr"
        }
    }
    handler_names = ["console"]

    if file_path is not None:
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        handlers["file"] = {
            "class": "logging.handlers.RotatingFileHandler",
            "level": log_level,
            "formatter": "json",
            "filename": str(file_path),
            "maxBytes": 10485760,  # 10MB
            "backupCount": 3,
            "encoding": "utf-8"
        }
        handler_names.append("file")

    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": formatters,
        "handlers": handlers,
        "loggers": {
            "clusteragg": {
                "level": log_level,
                "handlers": handler_names,
                "propagate": False
            }
        },
        "root": {
            "level": "WARNING",
            "handlers": ["console"]
        }
    }

    logging.config.dictConfig(logging_config)

    logger = logging.getLogger("clusteragg.core.logging")
    logger.debug("Logging configuration initialized", extra={
        "category": "startup",
        "status": log_level,
    })


def get_logger(name: str) -> logging.Logger:
    """Get logger with consistent naming."""
    return logging.getLogger(f"clusteragg.{name}")


def log_cell_event(
    logger: logging.Logger,
    cell: str,
    status: str,
    duration: float,
    run_id: Optional[str] = None,
    error: Optional[str] = None
) -> None:
    """Log a matrix cell completion with structured data."""
    message = f"Cell {cell} {status} in {duration:.2f}s"
    if error:
        message += f": {error}"
    logger.log(
        logging.WARNING if error else logging.INFO,
        message,
        extra={
            "cell": cell,
            "status": status,
            "duration": duration,
            "run_id": run_id,
            "category": "matrix"
        }
    )


def log_certification_result(
    logger: logging.Logger,
    rule: str,
    criterion: str,
    measured: float,
    bound: float,
    passed: bool
) -> None:
    """Log one certification verdict."""
    logger.log(
        logging.INFO if passed else logging.WARNING,
        f"{rule} {criterion}: measured={measured:.6g} bound={bound:.6g} "
        f"{'PASS' if passed else 'FAIL'}",
        extra={
            "rule": rule,
            "criterion": criterion,
            "status": "pass" if passed else "fail",
            "category": "certification"
        }
    )
