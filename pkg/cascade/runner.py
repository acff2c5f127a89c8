from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from cascade.plan import CascadePlan, Strategy
from data.corpus import Corpus
from model.checkpoint import Checkpoint
from pipeline.metrics import MetricsLog
from pipeline.training import train_llavakd_stage, train_tinyllava
from utils.errors import TeacherMutatedError

log = logging.getLogger(__name__)


@dataclass
class StageRecord:
    stage: int
    teacher_id: Optional[str]
    student_id: str
    input_fingerprint: str
    output_fingerprint: str
    teacher_fingerprint_before: Optional[str]
    teacher_fingerprint_after: Optional[str]
    updates: int
    metrics_summary: Dict[str, dict]
    checkpoint: Checkpoint = field(repr=False)
    metrics: Dict[str, MetricsLog] = field(default_factory=dict, repr=False)

    @property
    def dirname(self) -> str:
        return f"stage_{self.stage}_{self.teacher_id or 'none'}"

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "teacher_id": self.teacher_id,
            "student_id": self.student_id,
            "input_fingerprint": self.input_fingerprint,
            "output_fingerprint": self.output_fingerprint,
            "teacher_fingerprint_before": self.teacher_fingerprint_before,
            "teacher_fingerprint_after": self.teacher_fingerprint_after,
            "updates": self.updates,
            "provenance": self.checkpoint.provenance,
            "metrics_summary": self.metrics_summary,
        }


@dataclass
class CascadeResult:
    strategy: Strategy
    final: Checkpoint
    stages: List[StageRecord]

    @property
    def total_updates(self) -> int:
        return sum(s.updates for s in self.stages)


# ─────────────────────────────────────────────
# Una etapa
# ─────────────────────────────────────────────

def _stage(
    plan: CascadePlan,
    corpus: Corpus,
    index: int,
    student: Checkpoint,
    student_id: str,
    teacher: Checkpoint,
    teacher_id: str,
    distill_only: bool,
) -> StageRecord:
    before = teacher.fingerprint()
    log.info("Etapa %d: %s → %s%s", index + 1, teacher_id, student_id, " (distill_only)" if distill_only else "")

    out = train_llavakd_stage(
        student, teacher, corpus, plan.steps_for(index),
        distill_only=distill_only, label=f"stage{index + 1}", shuffle_stream=index,
    )

    after = teacher.fingerprint()
    if after != before:
        raise TeacherMutatedError(f"El profesor {teacher_id} cambió durante la etapa {index + 1}")

    return StageRecord(
        stage=index + 1,
        teacher_id=teacher_id,
        student_id=student_id,
        input_fingerprint=student.fingerprint(),
        output_fingerprint=out.checkpoint.fingerprint(),
        teacher_fingerprint_before=before,
        teacher_fingerprint_after=after,
        updates=out.updates,
        metrics_summary={k: m.summary() for k, m in out.metrics.items()},
        checkpoint=out.checkpoint,
        metrics=out.metrics,
    )


# ─────────────────────────────────────────────
# Estrategias
# ─────────────────────────────────────────────

def run_bottom_up(plan: CascadePlan, corpus: Corpus) -> CascadeResult:
    """
    Del profesor más débil al más fuerte; el alumno destilado de cada etapa
    es el alumno de la siguiente.
    """
    plan.strategy = Strategy(plan.strategy)
    plan.validate()
    current = plan.student
    stages: List[StageRecord] = []
    for i, (teacher, tid) in enumerate(zip(plan.ladder, plan.ladder_ids)):
        rec = _stage(plan, corpus, i, current, "student", teacher, tid,
                     distill_only=plan.distill_only and i > 0)
        stages.append(rec)
        current = rec.checkpoint
    return CascadeResult(Strategy.BOTTOM_UP, current, stages)


def run_top_down(plan: CascadePlan, corpus: Corpus) -> CascadeResult:
    """
    Profesor → TA → … → alumno: cada peldaño se destila del superior ya destilado
    y el alumno se destila una sola vez, al final.
    """
    plan.validate()
    stages: List[StageRecord] = []
    teacher, tid = plan.ladder[-1], plan.ladder_ids[-1]
    index = 0
    for j in range(len(plan.ladder) - 2, -1, -1):
        rung, rid = plan.ladder[j], plan.ladder_ids[j]
        rec = _stage(plan, corpus, index, rung, rid, teacher, tid, distill_only=False)
        stages.append(rec)
        teacher, tid = rec.checkpoint, f"{rid}-kd"
        index += 1

    rec = _stage(plan, corpus, index, plan.student, "student", teacher, tid, distill_only=False)
    stages.append(rec)
    return CascadeResult(Strategy.TOP_DOWN, rec.checkpoint, stages)


def run_single_teacher(plan: CascadePlan, corpus: Corpus) -> CascadeResult:
    """
    LLaVA-KD clásico: una etapa con el profesor más fuerte o con el peldaño
    `teacher_rung` del plan.
    """
    plan.validate()
    k = plan.single_teacher_index()
    rec = _stage(plan, corpus, 0, plan.student, "student", plan.ladder[k], plan.ladder_ids[k],
                 distill_only=False)
    return CascadeResult(Strategy.SINGLE_TEACHER, rec.checkpoint, [rec])


def run_direct(plan: CascadePlan, corpus: Corpus) -> CascadeResult:
    """
    Sin destilación: el alumno se entrena con PT → FT.
    """
    out = train_tinyllava(plan.student.config, corpus, plan.student, plan.steps_for(0))
    rec = StageRecord(
        stage=1,
        teacher_id=None,
        student_id="student",
        input_fingerprint=plan.student.fingerprint(),
        output_fingerprint=out.checkpoint.fingerprint(),
        teacher_fingerprint_before=None,
        teacher_fingerprint_after=None,
        updates=out.updates,
        metrics_summary={k: m.summary() for k, m in out.metrics.items()},
        checkpoint=out.checkpoint,
        metrics=out.metrics,
    )
    return CascadeResult(Strategy.NONE, out.checkpoint, [rec])


_RUNNERS = {
    Strategy.BOTTOM_UP: run_bottom_up,
    Strategy.TOP_DOWN: run_top_down,
    Strategy.SINGLE_TEACHER: run_single_teacher,
    Strategy.NONE: run_direct,
}


def run_plan(plan: CascadePlan, corpus: Corpus) -> CascadeResult:
    result = _RUNNERS[Strategy(plan.strategy)](plan, corpus)
    log.info("%s: %d etapas, %d actualizaciones", result.strategy.value, len(result.stages), result.total_updates)
    return result


# ─────────────────────────────────────────────
# Directorio de resultados
# ─────────────────────────────────────────────

def write_cascade_result(result: CascadeResult, directory: str | Path) -> Path:
    """
    <dir>/stage_<i>_<profesor>/{metrics.jsonl, timing.jsonl, student.ckpt}, final.ckpt, stages.json
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rec in result.stages:
        stage_dir = directory / rec.dirname
        stage_dir.mkdir(parents=True, exist_ok=True)
        for f in ("metrics.jsonl", "timing.jsonl"):
            (stage_dir / f).write_text("", encoding="utf-8")
        for m in rec.metrics.values():
            m.write(stage_dir, append=True)
        rec.checkpoint.save(stage_dir / "student.ckpt")

    result.final.save(directory / "final.ckpt")
    with open(directory / "stages.json", "w", encoding="utf-8") as f:
        json.dump({
            "strategy": result.strategy.value,
            "total_updates": result.total_updates,
            "final_fingerprint": result.final.fingerprint(),
            "stages": [r.to_dict() for r in result.stages],
        }, f, indent=2, sort_keys=True)
    return directory
