from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from autodiff.tensor import Tensor
from utils.errors import NonFiniteError


@dataclass
class OptimizerState:
    """
    Momentos sólo para los tensores entrenables.
    """
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    weight_decay: float = 0.0


class AdamW:
    def __init__(
        self,
        params: Mapping[str, Tensor],
        *,
        weight_decay: float = 0.0,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = {n: t for n, t in params.items() if t.requires_grad}
        self.betas = betas
        self.eps = eps
        self.state = OptimizerState(
            m={n: np.zeros_like(t.data) for n, t in self.params.items()},
            v={n: np.zeros_like(t.data) for n, t in self.params.items()},
            weight_decay=float(weight_decay),
        )

    def collect_grads(self) -> Dict[str, np.ndarray]:
        """
        Gradientes de los entrenables; los que no participaron cuentan como cero.
        """
        return {
            n: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for n, t in self.params.items()
        }

    def step(self, grads: Mapping[str, np.ndarray], lr: float) -> None:
        extra = set(grads) - set(self.params)
        if extra:
            raise KeyError(f"Gradientes de tensores no entrenables: {sorted(extra)}")

        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(name, "gradiente no finito")

        st = self.state
        st.step += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** st.step
        c2 = 1.0 - b2 ** st.step

        for name, t in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(t.data)
            if st.weight_decay:
                t.data = t.data - lr * st.weight_decay * t.data
            st.m[name] = b1 * st.m[name] + (1.0 - b1) * g
            st.v[name] = b2 * st.v[name] + (1.0 - b2) * g * g
            update = (st.m[name] / c1) / (np.sqrt(st.v[name] / c2) + self.eps)
            t.data = (t.data - lr * update).astype(t.dtype, copy=False)


def optimizer_step(opt: AdamW, grads: Mapping[str, np.ndarray], lr: float) -> None:
    opt.step(grads, lr)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Reescala todos los gradientes si su norma global supera max_norm.
    """
    norm = global_norm(grads)
    if not math.isfinite(norm):
        bad = next(n for n, g in grads.items() if not np.all(np.isfinite(g)))
        raise NonFiniteError(bad, "gradiente no finito")
    if max_norm <= 0 or norm <= max_norm:
        return dict(grads), norm
    k = max_norm / (norm + 1e-12)
    return {n: g * k for n, g in grads.items()}, norm
