from contextvars import ContextVar
from dataclasses import dataclass
from functools import wraps
import logging
import sys
import traceback
from typing import Any, Callable
from uuid import uuid4

import click


logger = logging.getLogger(__name__)

@dataclass
class LoggerContext:
    run_id: str = "-"
    command: str = "-"


ctx: ContextVar[LoggerContext] = ContextVar("ctx", default=LoggerContext())


class InjectFilter(logging.Filter):
    def filter(self, record):
        ctx_value = ctx.get()
        record.run_id = ctx_value.run_id
        record.command = ctx_value.command
        return True


def init_logging(config) -> None:
    # Initialize root logger
    log_level = logging.DEBUG if config.debug else logging.INFO
    logging.basicConfig(
        level=log_level,
        format=config.log_format,
        stream=sys.stderr,
        force=True,
    )

    # Add the filter to inject the run_id and command to log records
    f = InjectFilter()
    logging.getLogger().handlers[0].addFilter(f)


def _enter(func: Callable[..., Any], args: tuple, kwargs: dict) -> None:
    # Short ids are enough to tell concurrent runs apart in the log
    ctx.set(LoggerContext(run_id=uuid4().hex[:8], command=func.__name__))
    logger.debug(f"Running {func.__name__} with args: {args} and kwargs: {kwargs}")


def _failed(func: Callable[..., Any], exc: Exception) -> None:
    # Show full traceback
    logger.error(f"Error running {func.__name__}: {exc}")
    logger.error(traceback.format_exc())


def operation_logger(func: Callable[..., Any]) -> Callable[..., Any]:
    """Logger for CLI commands."""
    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        _enter(func, args, kwargs)
        try:
            result = func(*args, **kwargs)
            logger.debug(f"Result: {result}")
        except (click.exceptions.Exit, click.ClickException):
            # click reports exit codes and usage errors itself
            raise
        except Exception as exc:
            _failed(func, exc)
            raise
        return result
    return wrapper


def tool_logger(func: Callable[..., Any]) -> Callable[..., Any]:
    """Logger for MCP tools."""
    @wraps(func)
    async def wrapper(*args: Any, **kwargs: Any) -> Any:
        _enter(func, args, kwargs)
        try:
            result = await func(*args, **kwargs)
            logger.debug(f"Result: {result}")
        except Exception as exc:
            _failed(func, exc)
            raise
        return result
    return wrapper
