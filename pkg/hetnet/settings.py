"""
Runtime settings, logging setup and worker pools
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

T = TypeVar("T")
R = TypeVar("R")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class HetNetSettings(BaseSettings):
    """Environment overrides, e.g. HETNET_THREADS=4"""

    model_config = SettingsConfigDict(env_prefix="HETNET_", extra="ignore")

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "INFO"


def get_settings() -> HetNetSettings:
    """Read settings from the environment on every call"""
    return HetNetSettings()


def configure_logging(level: Optional[str] = None, quiet: bool = False) -> None:
    """Install one stream handler on the package logger"""
    if level is None:
        level = get_settings().log_level
    if quiet:
        level = "WARNING"
    root = logging.getLogger("hetnet")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """
    Ordered map over a process pool

    Results come back in input order, so callers stay deterministic no
    matter how many workers ran.
    """
    items = list(items)
    if workers is None:
        workers = get_settings().threads
    workers = min(workers, len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
