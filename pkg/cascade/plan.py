from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional

from model.checkpoint import Checkpoint
from model.config import parameter_count_for
from model.tiny_vlm import check_same_interface
from pipeline.steps import StepConfig, StepKind
from utils.errors import LadderOrderError

log = logging.getLogger(__name__)


class Strategy(str, Enum):
    BOTTOM_UP = "bottom_up"
    TOP_DOWN = "top_down"
    SINGLE_TEACHER = "single_teacher"
    NONE = "none"


@dataclass
class CascadePlan:
    """
    ladder: checkpoints de profesores, del más débil al más fuerte.
    student: checkpoint inicial del alumno (encoder preentrenado, resto aleatorio).
    stage_overrides: por índice de etapa (0-based), StepConfig que sustituyen a los de `steps`.
    teacher_rung: peldaño de `ladder` del que destila single_teacher; None es el más fuerte.
    """
    strategy: Strategy
    ladder: List[Checkpoint]
    student: Checkpoint
    steps: Dict[StepKind, StepConfig] = field(default_factory=dict)
    stage_overrides: Dict[int, Dict[StepKind, StepConfig]] = field(default_factory=dict)
    distill_only: bool = False
    ladder_ids: List[str] = field(default_factory=list)
    teacher_rung: Optional[int] = None

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if not self.ladder_ids:
            self.ladder_ids = [c.config.capacity_tier for c in self.ladder]

    def single_teacher_index(self) -> int:
        return len(self.ladder) - 1 if self.teacher_rung is None else self.teacher_rung

    def steps_for(self, stage: int) -> Dict[StepKind, StepConfig]:
        out = dict(self.steps)
        out.update(self.stage_overrides.get(stage, {}))
        return out

    def validate(self) -> "CascadePlan":
        s = self.strategy
        if s == Strategy.TOP_DOWN and len(self.ladder) < 2:
            raise LadderOrderError("top_down necesita una escalera de al menos 2 profesores")
        if s in (Strategy.BOTTOM_UP, Strategy.SINGLE_TEACHER) and not self.ladder:
            raise LadderOrderError(f"{s.value} necesita al menos un profesor")
        if s == Strategy.BOTTOM_UP and len(self.ladder) == 1:
            log.warning("bottom_up con un solo profesor: equivale a single_teacher")
        if len(self.ladder_ids) != len(self.ladder):
            raise LadderOrderError("ladder_ids y ladder de distinta longitud")
        if self.teacher_rung is not None and not 0 <= self.teacher_rung < len(self.ladder):
            raise LadderOrderError(f"teacher_rung={self.teacher_rung} fuera de la escalera (0..{len(self.ladder) - 1})")

        counts = [parameter_count_for(c.config) for c in self.ladder]
        for i in range(1, len(counts)):
            if counts[i] < counts[i - 1]:
                raise LadderOrderError(
                    f"Escalera fuera de orden: {self.ladder_ids[i - 1]}({counts[i - 1]}) "
                    f"> {self.ladder_ids[i]}({counts[i]})"
                )
        for c in self.ladder:
            check_same_interface(c.config, self.student.config)
        return self


def plan_from_mapping(
    strategy: str,
    ladder: List[Checkpoint],
    student: Checkpoint,
    steps: Mapping[StepKind, StepConfig] | None = None,
    *,
    distill_only: bool = False,
    ladder_ids: Optional[List[str]] = None,
    teacher_rung: Optional[int] = None,
) -> CascadePlan:
    return CascadePlan(
        strategy=Strategy(strategy),
        ladder=list(ladder),
        student=student,
        steps=dict(steps or {}),
        distill_only=distill_only,
        ladder_ids=list(ladder_ids or []),
        teacher_rung=teacher_rung,
    ).validate()
