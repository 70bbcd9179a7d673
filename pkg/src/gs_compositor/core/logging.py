"""Structured logging setup and execution decorators"""

import functools
import inspect
import json
import logging
import os
import sys
import traceback
import uuid
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np
import structlog

LOG_ENV_VAR = "MVCL_LOG"

# MVCL_LOG values -> stdlib levels
LOG_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

FIELD_ORDER = [
    "function", "correlation_id", "logger", "event",
    "source_lineno", "caller_lineno", "args", "kwargs",
    "duration_seconds", "level", "timestamp",
]


def summarize_value(value: Any) -> Any:
    """Replace arrays (possibly nested in containers) by a short shape/dtype tag"""
    if isinstance(value, np.ndarray):
        return f"ndarray({value.dtype}, {tuple(value.shape)})"
    if isinstance(value, (list, tuple)):
        return type(value)(summarize_value(v) for v in value)
    if isinstance(value, dict):
        return {k: summarize_value(v) for k, v in value.items()}
    return value


def sanitize_for_json(value: Any) -> str:
    """
    Convert value to string and replace double quotes with single quotes
    to prevent JSON parsing issues
    """
    if value is None:
        return ""
    return str(summarize_value(value)).replace('"', "'")


class CustomJSONRenderer:
    """JSON renderer with a fixed leading field order"""

    def __init__(self, field_order=None):
        self.field_order = field_order or FIELD_ORDER

    def __call__(self, logger, name, event_dict):
        ordered = {}
        for key in self.field_order:
            if key in event_dict:
                ordered[key] = sanitize_for_json(event_dict[key])
        for key, value in event_dict.items():
            if key not in ordered:
                ordered[key] = sanitize_for_json(value)
        return json.dumps(ordered, ensure_ascii=False)


def get_function_source_info(func: Callable) -> Dict[str, Any]:
    """Source file and first line of a function, best effort"""
    try:
        source_file = inspect.getsourcefile(func)
        _, source_lineno = inspect.getsourcelines(func)
        return {
            "source_file": Path(source_file).name if source_file else None,
            "source_lineno": source_lineno,
        }
    except (TypeError, OSError):
        return {"source_file": None, "source_lineno": None}


def get_caller_info(skip_frames: int = 2) -> Dict[str, Any]:
    """Module, function and line of the first frame outside this file"""
    frame = inspect.currentframe()
    try:
        for _ in range(skip_frames):
            if frame:
                frame = frame.f_back
        while frame:
            if frame.f_code.co_filename != __file__:
                return {
                    "caller_module": frame.f_globals.get("__name__", ""),
                    "caller_lineno": frame.f_lineno,
                    "caller_function": frame.f_code.co_name,
                }
            frame = frame.f_back
        return {"caller_module": None, "caller_lineno": None, "caller_function": None}
    finally:
        del frame


def level_from_env(default: str = "info") -> str:
    """Read MVCL_LOG, falling back to ``default`` on unknown values"""
    value = os.environ.get(LOG_ENV_VAR, default).strip().lower()
    return value if value in LOG_LEVELS else default


def setup_logging(
        level: Optional[str] = None,
        log_file: Optional[Path] = None,
        max_bytes: int = 5_242_880,
        backup_count: int = 5,
        enable_console: bool = True,
) -> None:
    """
    Configure structured logging for the package

    Args:
        level: One of error/info/debug; defaults to the MVCL_LOG variable
        log_file: Optional rotating log file
        max_bytes: Maximum size of log file before rotation
        backup_count: Number of rotated files to keep
        enable_console: Whether to log to stderr
    """
    level = (level or level_from_env()).lower()
    numeric_level = LOG_LEVELS.get(level, logging.INFO)

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            CustomJSONRenderer(),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    # Re-configuration replaces our own handlers instead of stacking them
    for handler in list(root_logger.handlers):
        if getattr(handler, "_gs_compositor", False):
            root_logger.removeHandler(handler)

    if enable_console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(numeric_level)
        console_handler._gs_compositor = True
        root_logger.addHandler(console_handler)

    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file, maxBytes=max_bytes, backupCount=backup_count
        )
        file_handler.setLevel(numeric_level)
        file_handler._gs_compositor = True
        root_logger.addHandler(file_handler)


def log_execution(
        log_args: bool = True,
        log_result: bool = False,
        log_exceptions: bool = True,
        timed: bool = True,
        include_caller: bool = True,
) -> Callable:
    """
    Decorator to log function execution with optional timing

    Example:
        @log_execution(log_args=False)
        def fit_scene(self, scene_dir: Path) -> Path:
            ...
    """

    def decorator(func: Callable) -> Callable:
        logger = structlog.get_logger(func.__module__)
        source_info = get_function_source_info(func)

        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            context = {
                "function": func.__name__,
                "correlation_id": str(uuid.uuid4())[:8],
                "source_lineno": source_info.get("source_lineno"),
            }
            if include_caller:
                caller_info = get_caller_info(skip_frames=1)
                context["caller_lineno"] = caller_info.get("caller_lineno")
                context["caller_module"] = caller_info.get("caller_module")
            if log_args:
                context["args"] = sanitize_for_json(args)[:200]
                context["kwargs"] = sanitize_for_json(kwargs)[:200]

            logger.info(f"Executing {func.__name__}", **context)
            start_time = datetime.now() if timed else None

            try:
                result = func(*args, **kwargs)
            except Exception as e:
                if log_exceptions:
                    error_context = {
                        **context,
                        "exception": sanitize_for_json(e),
                        "exception_type": type(e).__name__,
                        "traceback": sanitize_for_json(traceback.format_exc()),
                    }
                    if start_time is not None:
                        error_context["duration_seconds"] = (
                            datetime.now() - start_time
                        ).total_seconds()
                    logger.error(f"Failed {func.__name__}", **error_context)
                raise

            success_context = {**context}
            if start_time is not None:
                success_context["duration_seconds"] = (
                    datetime.now() - start_time
                ).total_seconds()
            if log_result:
                success_context["result"] = sanitize_for_json(result)[:200]
            logger.info(f"Completed {func.__name__}", **success_context)
            return result

        return wrapper

    return decorator


class ContextLogger:
    """
    Context manager that logs the start, end and failure of a named phase

    Example:
        with ContextLogger("fit_shape", scene=3, gaussians=256):
            fit_shape(scene, iters=200, lr=0.01)
    """

    def __init__(self, operation: str, include_caller: bool = True, **context):
        self.operation = operation
        self.context = context
        self.logger = structlog.get_logger()
        self.start_time: Optional[datetime] = None
        if include_caller:
            caller_info = get_caller_info(skip_frames=2)
            self.context["caller_lineno"] = caller_info.get("caller_lineno")
            self.context["caller_module"] = caller_info.get("caller_module")

    def __enter__(self) -> "ContextLogger":
        self.start_time = datetime.now()
        self.logger.info(f"Starting {self.operation}", **self.context)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> bool:
        duration = (datetime.now() - self.start_time).total_seconds()
        if exc_type is None:
            self.logger.info(
                f"Completed {self.operation}",
                duration_seconds=duration,
                **self.context,
            )
        else:
            self.logger.error(
                f"Failed {self.operation}",
                duration_seconds=duration,
                exception=sanitize_for_json(exc_val),
                exception_type=exc_type.__name__,
                **self.context,
            )
        return False
