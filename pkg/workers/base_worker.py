from __future__ import annotations

import traceback
from typing import Any, Optional

from PySide6.QtCore import QObject, Signal


class BaseWorker(QObject):
    """
    Trabajo de laboratorio con señales de progreso/fin/error.
    El resultado y la excepción quedan también en el propio worker,
    para poder leerlos tras esperar al pool sin bucle de eventos.
    """
    progress = Signal(str)
    finished = Signal(object)
    error = Signal(str)

    def __init__(self, label: str = ""):
        super().__init__()
        self.label = label
        self.result: Optional[Any] = None
        self.exception: Optional[BaseException] = None
        self._running = True

    def work(self) -> Any:
        """
        Sobrescribir en cada worker
        """
        raise NotImplementedError

    def run(self):
        try:
            self.progress.emit(f"{self.label}: inicio")
            self.result = self.work()
            self.finished.emit(self.result)
        except Exception as e:
            self.exception = e
            self.error.emit(f"{self.label}: {e}\n{traceback.format_exc()}")

    def stop(self):
        self._running = False

    @property
    def running(self) -> bool:
        return self._running
