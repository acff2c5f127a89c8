"""
Los cinco pasos de entrenamiento y su calendario de congelación.

  PT  / DPT : sólo el conector, sobre D1 (pares imagen-caption)
  FT  / SFT / DFT : conector + backbone + cabeza, sobre D2 (instrucciones)

DPT y DFT necesitan profesor; PT, FT y SFT no lo admiten.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from autodiff.tensor import backward, current_tape, no_grad
from data.corpus import Corpus
from data.pairs import Example
from losses.kd_losses import LossWeights, autoregressive_loss, dft_loss
from model.checkpoint import Checkpoint
from model.tiny_vlm import TinyVlm, check_same_interface
from pipeline.metrics import MetricRecord, MetricsLog
from pipeline.optimizer import AdamW, clip_grad_norm
from pipeline.schedule import lr_at
from utils.errors import TeacherRequiredError

log = logging.getLogger(__name__)


class StepKind(str, Enum):
    PT = "PT"
    FT = "FT"
    DPT = "DPT"
    SFT = "SFT"
    DFT = "DFT"


CONNECTOR_ONLY: FrozenSet[str] = frozenset({"connector"})
CONNECTOR_BACKBONE: FrozenSet[str] = frozenset({"connector", "backbone", "head"})

STEP_PARTS: Dict[StepKind, FrozenSet[str]] = {
    StepKind.PT: CONNECTOR_ONLY,
    StepKind.DPT: CONNECTOR_ONLY,
    StepKind.FT: CONNECTOR_BACKBONE,
    StepKind.SFT: CONNECTOR_BACKBONE,
    StepKind.DFT: CONNECTOR_BACKBONE,
}

STEP_DATASET: Dict[StepKind, str] = {
    StepKind.PT: "D1",
    StepKind.DPT: "D1",
    StepKind.FT: "D2",
    StepKind.SFT: "D2",
    StepKind.DFT: "D2",
}

DISTILL_STEPS = frozenset({StepKind.DPT, StepKind.DFT})

_DATASET_STREAM = {"D1": 1, "D2": 2}


@dataclass
class StepConfig:
    step_kind: StepKind
    peak_lr: float
    batch_size: int
    epochs: int = 1
    warmup_ratio: float = 0.03
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    weight_decay: float = 0.0
    clip_norm: float = 1.0
    max_steps: Optional[int] = None
    shuffle_stream: int = 0

    @property
    def trainable_parts(self) -> FrozenSet[str]:
        return STEP_PARTS[self.step_kind]

    @property
    def dataset(self) -> str:
        return STEP_DATASET[self.step_kind]

    @property
    def needs_teacher(self) -> bool:
        return self.step_kind in DISTILL_STEPS

    def validate(self) -> "StepConfig":
        if not 0.0 < self.warmup_ratio < 1.0:
            raise ValueError(f"warmup_ratio debe estar en (0, 1): {self.warmup_ratio}")
        if self.peak_lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("peak_lr > 0, batch_size ≥ 1 y epochs ≥ 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps ≥ 1")
        self.loss_weights.validate()
        return self

    def total_steps(self, n_examples: int) -> int:
        per_epoch = math.ceil(n_examples / self.batch_size)
        total = per_epoch * self.epochs
        return min(total, self.max_steps) if self.max_steps is not None else total


# Valores de escritorio: el lote 256/128 original escala a 32/16.
_DESK_DEFAULTS = {
    StepKind.PT: (1e-3, 32),
    StepKind.DPT: (1e-3, 32),
    StepKind.FT: (2e-3, 16),
    StepKind.SFT: (2e-3, 16),
    StepKind.DFT: (2e-3, 16),
}


def default_step_config(kind: StepKind | str, seed: int = 0, **overrides) -> StepConfig:
    kind = StepKind(kind)
    lr, bs = _DESK_DEFAULTS[kind]
    cfg = StepConfig(step_kind=kind, peak_lr=lr, batch_size=bs, seed=seed)
    return replace(cfg, **overrides).validate() if overrides else cfg.validate()


def default_step_configs(seed: int = 0) -> Dict[StepKind, StepConfig]:
    return {k: default_step_config(k, seed) for k in StepKind}


# ─────────────────────────────────────────────
# Resultado
# ─────────────────────────────────────────────

@dataclass
class StepResult:
    checkpoint: Checkpoint
    metrics: MetricsLog
    updates: int


# ─────────────────────────────────────────────
# Bucle de un paso
# ─────────────────────────────────────────────

def run_step(
    model: TinyVlm,
    teacher: Optional[TinyVlm],
    cfg: StepConfig,
    corpus: Corpus,
    *,
    examples: Sequence[Example] | None = None,
    provenance: Sequence[str] = (),
    tag: str | None = None,
) -> StepResult:
    """
    Entrena `model` in situ según el calendario del paso y devuelve su checkpoint.
    El profesor nunca recibe gradiente.
    """
    cfg.validate()
    kind = StepKind(cfg.step_kind)
    if cfg.needs_teacher and teacher is None:
        raise TeacherRequiredError(f"{kind.value} requiere un profesor")
    if not cfg.needs_teacher and teacher is not None:
        raise TeacherRequiredError(f"{kind.value} no admite profesor")
    if teacher is not None:
        check_same_interface(teacher.config, model.config)
        teacher.set_trainable(())

    data: List[Example] = list(examples) if examples is not None else corpus.dataset(cfg.dataset)
    if not data:
        raise ValueError(f"Conjunto vacío para {kind.value}")

    model.set_trainable(cfg.trainable_parts)
    opt = AdamW(model.trainable_parameters(), weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([int(cfg.seed), _DATASET_STREAM[cfg.dataset], int(cfg.shuffle_stream)])
    total = cfg.total_steps(len(data))
    metrics = MetricsLog(tag or kind.value)

    log.info("%s: %d pasos, lr=%g, lote=%d, partes=%s",
             tag or kind.value, total, cfg.peak_lr, cfg.batch_size, sorted(cfg.trainable_parts))

    step = 0
    while step < total:
        for batch in corpus.iter_batches(data, cfg.batch_size, rng):
            if step >= total:
                break
            t0 = time.perf_counter()
            current_tape().clear()
            lr = lr_at(step, total, cfg)

            student = model.forward(batch)
            if teacher is not None:
                with no_grad():
                    t_bundle = teacher.forward(batch).detached()
                loss = dft_loss(t_bundle, student, cfg.loss_weights)
                total_loss, terms = loss.total, loss.terms
            else:
                total_loss = autoregressive_loss(student, cfg.loss_weights.raw_sums)
                terms = {"rg": total_loss.item()}

            backward(total_loss)
            grads, norm = clip_grad_norm(opt.collect_grads(), cfg.clip_norm)
            opt.step(grads, lr)
            model.zero_grad()

            rec = MetricRecord(step=step, lr=lr, loss=total_loss.item(), grad_norm=norm, **terms)
            metrics.append(rec, time.perf_counter() - t0)
            log.debug("%s paso %d: %s", tag or kind.value, step, rec.to_dict())
            step += 1

    model.set_trainable(())
    label = tag or kind.value
    ckpt = model.to_checkpoint(list(provenance) + [label])
    return StepResult(ckpt, metrics, step)
