import logging
import os
from multiprocessing import Pool
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_WORKERS = 1


def get_worker_count() -> int:
    """Worker processes for path ensembles, read from HARNACKLAB_WORKERS."""
    raw = os.environ.get("HARNACKLAB_WORKERS", str(DEFAULT_WORKERS)).strip()
    if not raw.isdigit() or int(raw) < 1:
        logger.warning(f"Ignoring invalid HARNACKLAB_WORKERS={raw!r}; using {DEFAULT_WORKERS}")
        return DEFAULT_WORKERS
    return int(raw)


def get_metrics_file() -> str | None:
    return os.environ.get("HARNACKLAB_METRICS_FILE") or None


def parallel_map(func: Callable[[T], R], items: Sequence[T], workers: int | None = None) -> List[R]:
    """Map a picklable top-level function over items, preserving order.

    Results never depend on the worker count: callers aggregate them order-free.
    """
    n_workers = workers if workers is not None else get_worker_count()
    n_workers = max(1, min(n_workers, len(items)))
    if n_workers == 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} chunks to {n_workers} worker processes")
    with Pool(processes=n_workers) as pool:
        return pool.map(func, items)
