from __future__ import annotations

import math
from typing import Protocol


class HasSchedule(Protocol):
    peak_lr: float
    warmup_ratio: float


def warmup_steps(total_steps: int, warmup_ratio: float) -> int:
    """
    W = ceil(ratio·T), acotado a T − 1: el último paso de entrenamiento
    siempre usa un lr positivo.
    """
    return max(0, min(int(math.ceil(warmup_ratio * total_steps)), total_steps - 1))


def lr_at(step: float, total_steps: int, cfg: HasSchedule) -> float:
    """
    Calentamiento lineal 0 → pico en W pasos (ver warmup_steps),
    después coseno de pico a 0 en T.
    """
    if step < 0 or step > total_steps:
        raise ValueError(f"Paso fuera de rango: {step} ∉ [0, {total_steps}]")

    peak = float(cfg.peak_lr)
    W = warmup_steps(total_steps, cfg.warmup_ratio)

    if step < W:
        return peak * step / W
    if total_steps == W:
        return peak

    progress = (step - W) / (total_steps - W)
    return peak * 0.5 * (1.0 + math.cos(math.pi * progress))
