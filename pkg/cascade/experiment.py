from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from cascade.plan import CascadePlan, Strategy
from cascade.runner import CascadeResult, run_plan, write_cascade_result
from data.corpus import Corpus, CorpusConfig, build_corpus
from data.pairs import EVAL_SPLITS
from evalharness.evaluate import evaluate_all
from evalharness.results import ResultRow, ResultTable, aggregate
from losses.kd_losses import LossWeights
from model.checkpoint import Checkpoint
from model.config import ModelConfig, config_for_tier, validate_tier_ladder
from model.tiny_vlm import TinyVlm, build_model
from pipeline.encoder_pretrain import EncoderPretrainConfig, pretrain_encoder
from pipeline.steps import StepConfig, StepKind, default_step_configs
from pipeline.training import TrainResult, train_tinyllava
from settings.profiles import TIER_ORDER
from utils.errors import ConfigError

log = logging.getLogger(__name__)

METHOD_NAMES = {
    Strategy.NONE: "tinyllava",
    Strategy.SINGLE_TEACHER: "kd",
    Strategy.BOTTOM_UP: "ckd-bottom-up",
    Strategy.TOP_DOWN: "ckd-top-down",
}

Progress = Callable[[str], None]


@dataclass
class ExperimentConfig:
    """
    Un fichero de experimento fija corpus, escalera de tiers, pasos y estrategias.
    `steps` guarda sólo los cambios sobre los valores de escritorio.
    """
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    encoder: EncoderPretrainConfig = field(default_factory=EncoderPretrainConfig)
    tiers: List[str] = field(default_factory=lambda: list(TIER_ORDER))
    d_embed: int = 32
    dtype: str = "float64"
    steps: Dict[str, dict] = field(default_factory=dict)
    loss: LossWeights = field(default_factory=LossWeights)
    strategies: List[str] = field(
        default_factory=lambda: ["none", "single_teacher", "bottom_up", "top_down"]
    )
    distill_only: bool = False
    single_teacher_from: Optional[str] = None
    seeds: int = 5
    eval_splits: List[str] = field(default_factory=lambda: list(EVAL_SPLITS))

    def validate(self) -> "ExperimentConfig":
        self.corpus.validate()
        self.encoder.validate()
        self.loss.validate()
        if len(self.tiers) < 1 or any(t not in TIER_ORDER for t in self.tiers):
            raise ValueError(f"tiers debe ser un subconjunto de {TIER_ORDER}")
        for s in self.strategies:
            Strategy(s)
        for k in self.steps:
            StepKind(k)
        unknown = set(self.eval_splits) - set(EVAL_SPLITS)
        if unknown:
            raise ValueError(f"Splits desconocidos: {sorted(unknown)}")
        if self.seeds < 1:
            raise ValueError("seeds ≥ 1")
        if self.single_teacher_from is not None:
            if self.single_teacher_from not in self.teacher_tiers():
                raise ValueError(
                    f"single_teacher_from debe ser uno de los profesores {self.teacher_tiers()}"
                )
            if Strategy.SINGLE_TEACHER.value not in self.strategies:
                raise ValueError("single_teacher_from requiere la estrategia single_teacher")
        return self

    def student_tier(self) -> str:
        return TIER_ORDER[0] if TIER_ORDER[0] in self.tiers else self.tiers[0]

    def teacher_tiers(self) -> List[str]:
        return [t for t in self.tiers if t != self.student_tier()]

    def model_config(self, tier: str, seed: int) -> ModelConfig:
        c = self.corpus
        return config_for_tier(
            tier,
            vocab_size=len(c.vocab()),
            max_seq=c.seq_len,
            n_visual_tokens=c.m,
            d_vision_in=c.patch_dim,
            d_embed=self.d_embed,
            seed=seed,
            dtype=self.dtype,
        )

    def step_configs(self, seed: int) -> Dict[StepKind, StepConfig]:
        out = default_step_configs(seed)
        for kind, cfg in out.items():
            over = dict(self.steps.get(kind.value, {}))
            cfg = replace(cfg, loss_weights=self.loss, **over)
            out[kind] = cfg.validate()
        return out


@dataclass
class PlanFile:
    """
    Fichero de plan: estrategia, rutas de checkpoints (relativas al fichero)
    y el experimento que fija corpus y pasos.
    stage_overrides: {"<etapa 1-based>": {"DFT": {"peak_lr": …}}}
    teacher_rung: índice 0-based en `ladder` para single_teacher.
    """
    strategy: Strategy
    experiment: ExperimentConfig
    ladder: List[str] = field(default_factory=list)
    student: str = ""
    ladder_ids: List[str] = field(default_factory=list)
    distill_only: bool = False
    stage_overrides: Dict[str, Dict[str, dict]] = field(default_factory=dict)
    teacher_rung: Optional[int] = None
    base_dir: Path = field(default=Path("."), init=False, repr=False)

    def validate(self) -> "PlanFile":
        if self.strategy != Strategy.NONE and not self.ladder:
            raise ValueError(f"ladder vacía para {self.strategy.value}")
        if not self.student:
            raise ValueError("falta la ruta del alumno inicial (student)")
        if self.ladder_ids and len(self.ladder_ids) != len(self.ladder):
            raise ValueError("ladder_ids y ladder de distinta longitud")
        for stage, steps in self.stage_overrides.items():
            if not stage.isdigit() or int(stage) < 1:
                raise ValueError(f"Etapa inválida en stage_overrides: {stage}")
            for k in steps:
                StepKind(k)
        if self.teacher_rung is not None and not 0 <= self.teacher_rung < len(self.ladder):
            raise ValueError(f"teacher_rung fuera de la escalera: {self.teacher_rung}")
        return self

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def input_paths(self) -> List[Path]:
        return [self.resolve(p) for p in self.ladder] + [self.resolve(self.student)]

    def to_plan(self, seed: int) -> CascadePlan:
        ladder = [Checkpoint.load(self.resolve(p)) for p in self.ladder]
        student = Checkpoint.load(self.resolve(self.student))
        steps = self.experiment.step_configs(seed)
        overrides: Dict[int, Dict[StepKind, StepConfig]] = {}
        for stage, per_kind in self.stage_overrides.items():
            overrides[int(stage) - 1] = {
                StepKind(k): replace(steps[StepKind(k)], **over).validate() for k, over in per_kind.items()
            }
        return CascadePlan(
            strategy=self.strategy,
            ladder=ladder,
            student=student,
            steps=steps,
            stage_overrides=overrides,
            distill_only=self.distill_only,
            ladder_ids=list(self.ladder_ids),
            teacher_rung=self.teacher_rung,
        )


# ─────────────────────────────────────────────
# Tiers
# ─────────────────────────────────────────────

@dataclass
class TierArtifacts:
    tier: str
    encoder: Checkpoint
    trained: TrainResult

    @property
    def checkpoint(self) -> Checkpoint:
        return self.trained.checkpoint


def pretrain_tier(exp: ExperimentConfig, corpus: Corpus, tier: str, seed: int) -> TierArtifacts:
    """
    Encoder proxy + TinyLLaVA (PT → FT) para un tier.
    """
    cfg = exp.model_config(tier, seed)
    model = build_model(cfg)
    pretrain_encoder(model, corpus, replace(exp.encoder, seed=seed))
    encoder = model.to_checkpoint(["encoder"])
    trained = train_tinyllava(cfg, corpus, encoder, exp.step_configs(seed))
    return TierArtifacts(tier, encoder, trained)


def pretrain_tiers(exp: ExperimentConfig, corpus: Corpus, seed: int,
                   progress: Optional[Progress] = None) -> Dict[str, TierArtifacts]:
    validate_tier_ladder([exp.model_config(t, seed) for t in exp.tiers])
    out: Dict[str, TierArtifacts] = {}
    for tier in exp.tiers:
        if progress:
            progress(f"seed {seed}: preentrenando {tier}")
        out[tier] = pretrain_tier(exp, corpus, tier, seed)
    return out


# ─────────────────────────────────────────────
# Réplica por semilla
# ─────────────────────────────────────────────

@dataclass
class ReplicaResult:
    seed: int
    table: ResultTable
    tiers: Dict[str, TierArtifacts] = field(default_factory=dict, repr=False)
    cascades: Dict[str, CascadeResult] = field(default_factory=dict, repr=False)


def run_replica(
    exp: ExperimentConfig,
    seed: int,
    corpus: Corpus | None = None,
    *,
    out_dir: str | Path | None = None,
    progress: Optional[Progress] = None,
) -> ReplicaResult:
    """
    Réplica completa: tiers, cada estrategia pedida y evaluación en los splits retenidos.
    """
    exp.validate()
    corpus = corpus or build_corpus(exp.corpus)
    tiers = pretrain_tiers(exp, corpus, seed, progress)
    table = ResultTable(tuple(exp.eval_splits))

    for tier, art in tiers.items():
        scores = evaluate_all(TinyVlm.from_checkpoint(art.checkpoint), corpus, exp.eval_splits)
        table.add(ResultRow(f"tinyllava-{tier}", Strategy.NONE.value, seed, scores))

    if out_dir is not None:
        for tier, art in tiers.items():
            art.checkpoint.save(Path(out_dir) / "tiers" / f"{tier}.ckpt")

    student = tiers[exp.student_tier()].encoder
    teachers = exp.teacher_tiers()
    ladder = [tiers[t].checkpoint for t in teachers]
    steps = exp.step_configs(seed)

    runs: List[Tuple[str, Strategy, Optional[int]]] = []
    used: Dict[str, int] = {}
    for name in exp.strategies:
        strategy = Strategy(name)
        if strategy == Strategy.NONE:
            continue  # ya evaluado como tinyllava-student
        method = METHOD_NAMES[strategy]
        used[method] = used.get(method, 0) + 1
        if used[method] > 1:
            method = f"{method}#{used[method]}"
        runs.append((method, strategy, None))
        if (strategy == Strategy.SINGLE_TEACHER and exp.single_teacher_from is not None
                and method == METHOD_NAMES[strategy]):
            runs.append((f"kd-from-{exp.single_teacher_from}", strategy, teachers.index(exp.single_teacher_from)))

    cascades: Dict[str, CascadeResult] = {}
    for method, strategy, rung in runs:
        if progress:
            progress(f"seed {seed}: {method}")
        plan = CascadePlan(strategy, ladder, student, steps, distill_only=exp.distill_only,
                           ladder_ids=teachers, teacher_rung=rung)
        result = run_plan(plan, corpus)
        cascades[method] = result

        scores = evaluate_all(TinyVlm.from_checkpoint(result.final), corpus, exp.eval_splits)
        table.add(ResultRow(method, strategy.value, seed, scores))
        if out_dir is not None:
            write_cascade_result(result, Path(out_dir) / method)

    log.info("Réplica seed=%d: %d filas", seed, len(table.rows))
    return ReplicaResult(seed, table, tiers, cascades)


# ─────────────────────────────────────────────
# Comparación entre estrategias
# ─────────────────────────────────────────────

def compare_strategies(
    exp: ExperimentConfig,
    seeds: Sequence[int],
    *,
    jobs: int = 1,
    out_dir: str | Path | None = None,
    progress: Optional[Progress] = None,
) -> ResultTable:
    """
    Réplicas por semilla (en paralelo hasta `jobs`) agregadas en media ± desviación.
    La tabla sale con la pareja delta de comparison_pair().
    """
    from workers.replica_worker import run_replicas

    exp.validate()
    if len(exp.strategies) < 2:
        raise ConfigError("strategies", f"hacen falta al menos dos estrategias, hay {len(exp.strategies)}")
    corpus = build_corpus(exp.corpus)
    corpus.warm()

    def replica(seed: int) -> ResultTable:
        target = Path(out_dir) / f"seed_{seed}" if out_dir is not None else None
        return run_replica(exp, seed, corpus, out_dir=target, progress=progress).table

    tables = run_replicas(replica, list(seeds), jobs=jobs, progress=progress)
    table = aggregate(tables)
    pair = comparison_pair(exp, table)
    if pair is not None:
        table.compare(*pair)
    return table


def comparison_pair(exp: ExperimentConfig, table: ResultTable) -> Optional[Tuple[str, str]]:
    """
    (primero, segundo) de la fila delta: top-down frente a bottom-up si están
    las dos; si no, las dos primeras estrategias pedidas ("none" es el
    tinyllava del alumno).
    """
    methods = {a.method for a in table.aggregates}
    top, bottom = METHOD_NAMES[Strategy.TOP_DOWN], METHOD_NAMES[Strategy.BOTTOM_UP]
    if top in methods and bottom in methods:
        return top, bottom

    candidates: List[str] = []
    for name in dict.fromkeys(exp.strategies):
        strategy = Strategy(name)
        if strategy == Strategy.NONE:
            found = [f"tinyllava-{exp.student_tier()}"]
        else:
            found = [a.method for a in table.aggregates if a.strategy == strategy.value]
        candidates += [m for m in found if m in methods and m not in candidates]
    return (candidates[0], candidates[1]) if len(candidates) >= 2 else None


@dataclass(frozen=True)
class OrderingVerdict:
    status: str          # holds | inconclusive | fails
    better: str
    worse: str
    better_mean: float
    worse_mean: float
    better_stdev: float
    worse_stdev: float

    @property
    def ok(self) -> bool:
        return self.status == "holds"

    @property
    def message(self) -> str:
        return (f"{self.better} ({self.better_mean:.4f} ± {self.better_stdev:.4f}) ≥ "
                f"{self.worse} ({self.worse_mean:.4f} ± {self.worse_stdev:.4f}): {self.status}")


def check_ordering(table: ResultTable, better: str, worse: str, split: str | None = None) -> OrderingVerdict:
    """
    Media de `better` ≥ media de `worse` (Avg o un split). Si falla pero las
    bandas ±1 desviación se solapan, el resultado es inconcluso.
    """
    a, b = table.find(better), table.find(worse)
    if a is None or b is None:
        raise KeyError(f"Método sin agregado: {better if a is None else worse}")

    if split is None:
        ma, sa, mb, sb = a.avg_mean, a.avg_stdev, b.avg_mean, b.avg_stdev
    else:
        ma, sa, mb, sb = a.mean[split], a.stdev[split], b.mean[split], b.stdev[split]

    if ma >= mb:
        status = "holds"
    elif ma + sa >= mb - sb:
        status = "inconclusive"
    else:
        status = "fails"
    return OrderingVerdict(status, better, worse, ma, mb, sa, sb)
