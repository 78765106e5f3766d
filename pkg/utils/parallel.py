"""
Job pool shared by ensemble training, distillation and rectification.
"""

import logging
import time
import concurrent.futures
from typing import Any, Callable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)


def run_jobs(fn: Callable[[Any], Any], items: Sequence[Any], parallel: bool = False,
             max_workers: Optional[int] = None) -> List[Tuple[Any, float]]:
    """
    Run `fn` over `items` and return `(result, seconds)` per item, in input order.

    Every job owns its inputs; results do not depend on the execution mode.
    """
    items = list(items)

    def timed(item):
        start = time.perf_counter()
        result = fn(item)
        return result, time.perf_counter() - start

    if not parallel or len(items) <= 1:
        return [timed(item) for item in items]

    workers = max_workers or len(items)
    workers = max(1, min(workers, len(items)))
    results: List[Optional[Tuple[Any, float]]] = [None] * len(items)

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(timed, item): idx for idx, item in enumerate(items)}
        for future in concurrent.futures.as_completed(futures):
            idx = futures[future]
            try:
                results[idx] = future.result()
            except Exception as e:
                logger.error(f"Job {idx} failed: {e}")
                for pending in futures:
                    pending.cancel()
                raise

    return results  # type: ignore[return-value]
