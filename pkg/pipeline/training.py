from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Sequence

from data.corpus import Corpus
from model.checkpoint import Checkpoint
from model.config import ModelConfig
from model.tiny_vlm import TinyVlm, build_model, check_same_interface
from pipeline.metrics import MetricsLog
from pipeline.steps import StepConfig, StepKind, default_step_configs, run_step
from utils.errors import IncompatibleModelsError, StepOrderError

log = logging.getLogger(__name__)

FULL_ORDER = (StepKind.DPT, StepKind.SFT, StepKind.DFT)
DISTILL_ONLY_ORDER = (StepKind.DPT, StepKind.DFT)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: Dict[str, MetricsLog] = field(default_factory=dict)
    updates: int = 0


def _configs(configs: Mapping[StepKind, StepConfig] | None, seed: int) -> Dict[StepKind, StepConfig]:
    base = default_step_configs(seed)
    if configs:
        base.update({StepKind(k): v for k, v in configs.items()})
    return base


# ─────────────────────────────────────────────
# TinyLLaVA: PT → FT
# ─────────────────────────────────────────────

def train_tinyllava(
    config: ModelConfig,
    corpus: Corpus,
    encoder: Checkpoint,
    configs: Mapping[StepKind, StepConfig] | None = None,
    skip_ft: bool = False,
) -> TrainResult:
    """
    PT sobre D1 (sólo conector) y FT sobre D2 (conector + backbone + cabeza).
    """
    if "encoder" not in encoder.provenance:
        raise ValueError("train_tinyllava requiere un encoder preentrenado")
    steps = _configs(configs, config.seed)

    model = build_model(config, pretrained=encoder)
    history = list(encoder.provenance)
    result = TrainResult(model.to_checkpoint(history))

    kinds = [StepKind.PT] if skip_ft else [StepKind.PT, StepKind.FT]
    for kind in kinds:
        out = run_step(model, None, steps[kind], corpus, provenance=history)
        history = list(out.checkpoint.provenance)
        result.checkpoint = out.checkpoint
        result.metrics[kind.value] = out.metrics
        result.updates += out.updates

    log.info("TinyLLaVA %s listo (%s)", config.capacity_tier, " → ".join(history))
    return result


# ─────────────────────────────────────────────
# LLaVA-KD: DPT → SFT → DFT contra un profesor fijo
# ─────────────────────────────────────────────

class DistillationStage:
    """
    Máquina de estados de una etapa: DPT → SFT → DFT, o DPT → DFT en modo distill_only.
    """

    def __init__(
        self,
        student: TinyVlm,
        teacher: TinyVlm,
        corpus: Corpus,
        configs: Mapping[StepKind, StepConfig],
        *,
        distill_only: bool = False,
        label: str = "stage1",
        provenance: Sequence[str] = (),
        shuffle_stream: int = 0,
    ):
        check_same_interface(teacher.config, student.config)
        self.student = student
        self.teacher = teacher
        self.corpus = corpus
        self.configs = configs
        self.order = DISTILL_ONLY_ORDER if distill_only else FULL_ORDER
        self.label = label
        self.history: List[str] = list(provenance)
        self.shuffle_stream = shuffle_stream
        self.done: List[StepKind] = []
        self.metrics: Dict[str, MetricsLog] = {}
        self.updates = 0
        self.checkpoint: Checkpoint | None = None

    @property
    def expected(self) -> StepKind | None:
        return self.order[len(self.done)] if len(self.done) < len(self.order) else None

    @property
    def finished(self) -> bool:
        return self.expected is None

    def run(self, kind: StepKind | str) -> Checkpoint:
        kind = StepKind(kind)
        if kind != self.expected:
            raise StepOrderError(
                f"{self.label}: {kind.value} fuera de orden (esperado {getattr(self.expected, 'value', 'fin')}, "
                f"secuencia {'→'.join(k.value for k in self.order)})"
            )

        cfg = replace(self.configs[kind], shuffle_stream=self.shuffle_stream)
        teacher = self.teacher if cfg.needs_teacher else None
        out = run_step(
            self.student, teacher, cfg, self.corpus,
            provenance=self.history, tag=f"{self.label}/{kind.value}",
        )
        self.history = list(out.checkpoint.provenance)
        self.metrics[kind.value] = out.metrics
        self.updates += out.updates
        self.done.append(kind)
        self.checkpoint = out.checkpoint
        return out.checkpoint

    def run_all(self) -> Checkpoint:
        while not self.finished:
            self.run(self.expected)
        return self.checkpoint


def train_llavakd_stage(
    student: Checkpoint,
    teacher: Checkpoint,
    corpus: Corpus,
    configs: Mapping[StepKind, StepConfig] | None = None,
    *,
    distill_only: bool = False,
    label: str = "stage1",
    shuffle_stream: int = 0,
) -> TrainResult:
    """
    Una etapa completa contra el profesor fijo; devuelve el alumno destilado.
    """
    try:
        check_same_interface(teacher.config, student.config)
    except IncompatibleModelsError:
        log.error("%s: alumno %s y profesor %s no comparten tokenizador/m",
                  label, student.config.capacity_tier, teacher.config.capacity_tier)
        raise

    steps = _configs(configs, student.config.seed)
    s_model = TinyVlm.from_checkpoint(student)
    t_model = TinyVlm.from_checkpoint(teacher)

    stage = DistillationStage(
        s_model, t_model, corpus, steps,
        distill_only=distill_only, label=label,
        provenance=student.provenance, shuffle_stream=shuffle_stream,
    )
    ckpt = stage.run_all()
    return TrainResult(ckpt, stage.metrics, stage.updates)
