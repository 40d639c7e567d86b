"""Order-preserving process-pool map with worker-count resolution."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

WORKERS_ENV = "SHAPELIM_WORKERS"


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else ``$SHAPELIM_WORKERS``, else 1."""
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "").strip()
        if not raw:
            return 1
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return workers


def pmap(fn: Callable, items: Iterable, workers: int | None = None, chunksize: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally across processes.

    Results come back in input order, so output never depends on ``workers``
    as long as ``fn`` is a pure function of its argument.
    """
    items: Sequence = list(items)
    w = resolve_workers(workers)
    if w == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (4 * w))
    with ProcessPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
