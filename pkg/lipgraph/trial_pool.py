"""Thread pool for running independent trials in parallel.
"""

import logging
from queue import Queue
from threading import Barrier, Thread
from typing import Any, Callable, List, Optional

from .enforce_types import enforce_types
from .exceptions import ParameterError

logger = logging.getLogger(__name__)


@enforce_types
class TrialSwarm:
    """Fixed set of worker threads, each fed through its own queue.

    Trial ``t`` always runs on worker ``t % jobs``; results are collected by
    trial index so they never depend on scheduling.
    """

    jobs: int
    funcBarrier: Barrier
    funcQueues: List[Queue]
    threads: List[Thread]

    def __init__(self, jobs: int = 1):
        """Arguments:
            jobs: number of worker threads (1 runs everything on the caller's thread)
        """
        if jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {jobs}")
        self.jobs = jobs
        self.funcBarrier = Barrier(jobs + 1)
        self.funcQueues = [Queue() for _ in range(jobs)]
        self.threads = []
        if jobs == 1:
            return

        def worker(i):
            queue = self.funcQueues[i]
            while True:
                func = queue.get()
                if func is None:
                    break
                self.funcBarrier.wait()
                func(i)
                self.funcBarrier.wait()

        for i in range(jobs):
            thread = Thread(target=worker, daemon=True, args=(i,))
            thread.start()
            self.threads.append(thread)

    def parallel(self, func: Callable[[int], None]):
        """Call ``func(worker_index)`` once on every worker and wait for all of them."""
        if self.jobs == 1:
            func(0)
            return
        for queue in self.funcQueues:
            queue.put(func)
        self.funcBarrier.wait()
        self.funcBarrier.wait()

    def map(self, func: Callable[[int], Any], trials: int) -> List[Any]:
        """``[func(0), ..., func(trials - 1)]`` computed across the workers.

        The first exception (by trial index) is re-raised in the caller.
        """
        results: List[Any] = [None] * trials
        errors: List[Optional[BaseException]] = [None] * trials

        def run(i):
            for t in range(i, trials, self.jobs):
                try:
                    results[t] = func(t)
                except Exception as e:  # re-raised below in trial order
                    errors[t] = e

        self.parallel(run)
        for t, error in enumerate(errors):
            if error is not None:
                logger.error("trial %d failed: %s", t, error)
                raise error
        return results

    def end(self):
        """Stop and join every worker; the swarm cannot be used afterwards."""
        for queue in self.funcQueues:
            queue.put(None)
        for thread in self.threads:
            thread.join()
        self.threads = []

    def __enter__(self) -> "TrialSwarm":
        return self

    def __exit__(self, *exc_info):
        self.end()

    def __len__(self):
        return self.jobs
