"""
Parallel Map

Order-preserving thread-pool map for independent per-frequency work.

- Results come back in input order regardless of completion order
- threads=1 runs in the calling thread
- Random streams are spawned up front from one seed so serial and parallel runs match
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger("TDPT.Parallel")

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    Apply fn to every item, optionally on a thread pool.

    Args:
        fn: pure function of one item
        items: inputs
        threads: worker count (1 = serial)

    Returns:
        Results in the order of items
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    results: List[Optional[R]] = [None] * len(items)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        future_to_index = {executor.submit(fn, item): i for i, item in enumerate(items)}
        for future in as_completed(future_to_index):
            index = future_to_index[future]
            try:
                results[index] = future.result()
            except Exception as e:
                logger.error(f"Task {index} failed: {e}")
                raise
    logger.debug(f"Completed {len(items)} tasks on {threads} threads")
    return results  # type: ignore[return-value]


def spawn_generators(seed: int, count: int, *stream: int) -> List[np.random.Generator]:
    """Independent generators for count tasks derived from (seed, *stream)."""
    sequence = np.random.SeedSequence([seed, *stream]) if stream else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in sequence.spawn(count)]
