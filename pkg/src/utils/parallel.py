import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from dotenv import load_dotenv

from src.utils.errors import ConfigurationError

T = TypeVar('T')
R = TypeVar('R')

THREADS_ENV = 'ADAPTIVE_HASH_THREADS'

logger = logging.getLogger(__name__)


def resolve_workers(configured: Optional[int] = None) -> int:
    """Worker count: ADAPTIVE_HASH_THREADS (environment or .env) wins over the config value"""
    load_dotenv()
    raw = os.getenv(THREADS_ENV)
    if raw:
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got '{raw}'")
    else:
        workers = configured if configured is not None else 1
    if workers < 1:
        raise ConfigurationError(f"Worker count must be at least 1, got {workers}")
    return workers


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Map over items on a thread pool; results come back in input order"""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
