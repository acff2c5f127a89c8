from __future__ import annotations

import logging
from typing import Any, Callable, List, Optional, Sequence

from PySide6.QtCore import QCoreApplication, QRunnable, QThreadPool, Qt

from workers.base_worker import BaseWorker

log = logging.getLogger(__name__)


class ReplicaWorker(BaseWorker):
    """
    Una réplica: fn(seed).
    """

    def __init__(self, fn: Callable[[int], Any], seed: int):
        super().__init__(label=f"seed {seed}")
        self.fn = fn
        self.seed = seed

    def work(self) -> Any:
        return self.fn(self.seed)


class _Runnable(QRunnable):
    def __init__(self, worker: BaseWorker):
        super().__init__()
        self.worker = worker
        self.setAutoDelete(False)

    def run(self):
        if self.worker.running:
            self.worker.run()


def _ensure_core_app() -> None:
    if QCoreApplication.instance() is None:
        QCoreApplication([])


def run_replicas(
    fn: Callable[[int], Any],
    seeds: Sequence[int],
    *,
    jobs: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> List[Any]:
    """
    Una réplica por semilla, como mucho `jobs` a la vez.
    Los resultados se devuelven en el orden de `seeds`.
    """
    if jobs < 1:
        raise ValueError("jobs ≥ 1")

    workers = [ReplicaWorker(fn, s) for s in seeds]
    for w in workers:
        w.error.connect(lambda msg: log.error("%s", msg), Qt.DirectConnection)
        if progress is not None:
            w.progress.connect(progress, Qt.DirectConnection)

    if jobs == 1 or len(workers) <= 1:
        for w in workers:
            w.run()
            if w.exception is not None:
                raise w.exception
    else:
        _ensure_core_app()
        pool = QThreadPool()
        pool.setMaxThreadCount(jobs)
        runnables = [_Runnable(w) for w in workers]
        for r in runnables:
            pool.start(r)
        pool.waitForDone()
        for w in workers:
            if w.exception is not None:
                raise w.exception

    return [w.result for w in workers]
