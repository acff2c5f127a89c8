from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from autodiff.tensor import Tensor


@dataclass
class LogitBundle:
    """
    Logits por posición de un forward: (B, L, c), las m primeras posiciones visuales.
    """
    logits: Tensor
    m: int
    relevance_mask: np.ndarray   # (B, L) bool
    targets: np.ndarray          # (B, L, c) one-hot

    @property
    def shape(self) -> tuple:
        return self.logits.shape

    @property
    def vocab_size(self) -> int:
        return int(self.logits.shape[-1])

    def detached(self) -> "LogitBundle":
        return LogitBundle(self.logits.detach(), self.m, self.relevance_mask, self.targets)

    def with_logits(self, logits) -> "LogitBundle":
        t = logits if isinstance(logits, Tensor) else Tensor(logits)
        return LogitBundle(t, self.m, self.relevance_mask, self.targets)
