"""
Worker pool for Monte Carlo trials.

Trial i always draws from ``stream.substream(i)``, and results come back in
trial order, so any reduction over them is independent of the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, Optional

from tqdm import tqdm

from src.walk_core.rng_streams import RngStream

WORKERS_ENV = "CUTLAB_WORKERS"

TrialFn = Callable[[RngStream], Any]


def default_workers() -> int:
    """$CUTLAB_WORKERS if set, else every core."""
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _run_batch(trial_fn: TrialFn, stream: RngStream, start: int, stop: int) -> list:
    """Trials start..stop-1, each on its own substream."""
    return [trial_fn(stream.substream(i)) for i in range(start, stop)]


def map_trials(
    trial_fn: TrialFn,
    stream: RngStream,
    trials: int,
    *,
    workers: int = 1,
    batch_size: Optional[int] = None,
    desc: Optional[str] = None,
) -> list:
    """
    Run ``trial_fn`` on trials 0..trials-1 and return the results in order.

    ``trial_fn`` must be picklable (a module-level function or a
    functools.partial of one) when ``workers > 1``.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    workers = max(1, int(workers))
    if batch_size is None:
        batch_size = max(1, min(1000, math.ceil(trials / (4 * workers))))
    bounds = [(start, min(start + batch_size, trials)) for start in range(0, trials, batch_size)]

    if workers == 1:
        results = []
        for start, stop in tqdm(bounds, desc=desc, disable=None, leave=False):
            results.extend(_run_batch(trial_fn, stream, start, stop))
        return results

    batches: list[list] = [[] for _ in bounds]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_run_batch, trial_fn, stream, start, stop): k for k, (start, stop) in enumerate(bounds)}
        with tqdm(total=len(bounds), desc=desc, disable=None, leave=False) as bar:
            for future in as_completed(futures):
                batches[futures[future]] = future.result()
                bar.update(1)
    return [result for batch in batches for result in batch]
