from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Set

import numpy as np

from data.batch import TokenBatch, collate
from data.pairs import EVAL_SPLITS, QA_TIERS, Example, caption_example, instruction_example
from data.scene_simulator import SceneSpec, generate_scene, scene_patches, scene_signature
from data.vocab import Vocab

log = logging.getLogger(__name__)

# Flujos de semillas independientes dentro de cada split.
_CAPTION_STREAM, _INSTRUCTION_STREAM, _QUESTION_STREAM, _EVAL_STREAM = 0, 1, 2, 3

QA_TEXT_LEN = 8  # <bos> q_rel ca sa cb sb answer <eos>
MAX_REDRAWS = 64


@dataclass
class CorpusConfig:
    n_caption_pairs: int = 512
    n_instruction_pairs: int = 1024
    n_eval_per_split: int = 128
    grid_size: int = 4
    cell_px: int = 8
    min_objects: int = 1
    max_objects: int = 3
    train_seed: int = 0
    eval_seed: int = 1

    def validate(self) -> None:
        if self.train_seed == self.eval_seed:
            raise ValueError("train_seed y eval_seed deben ser distintos")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("Se requiere 1 ≤ min_objects ≤ max_objects")
        if self.grid_size < 2 or self.cell_px < 4:
            raise ValueError("grid_size ≥ 2 y cell_px ≥ 4")

    @property
    def m(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def patch_dim(self) -> int:
        return self.cell_px * self.cell_px * 3

    @property
    def seq_len(self) -> int:
        caption_len = 2 * self.max_objects + 2
        return self.m + max(caption_len, QA_TEXT_LEN)

    def vocab(self) -> Vocab:
        return Vocab.build(self.grid_size, self.max_objects)


def stream_seed(base: int, stream: int, index: int) -> int:
    return int(np.random.SeedSequence([int(base), stream, int(index)]).generate_state(1)[0])


@dataclass
class Corpus:
    config: CorpusConfig
    vocab: Vocab
    scenes: List[SceneSpec]
    d1: List[Example]
    d2: List[Example]
    eval_splits: Dict[str, List[Example]]
    _patch_cache: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def seq_len(self) -> int:
        return self.config.seq_len

    def patches(self, scene_index: int) -> np.ndarray:
        cached = self._patch_cache.get(scene_index)
        if cached is None:
            cached = scene_patches(self.scenes[scene_index], self.config.cell_px)
            self._patch_cache[scene_index] = cached
        return cached

    def warm(self) -> None:
        """
        Renderiza todos los parches; después el corpus sólo se lee.
        """
        for i in range(len(self.scenes)):
            self.patches(i)

    def batch(self, examples: Sequence[Example]) -> TokenBatch:
        return collate(
            examples,
            [self.patches(ex.scene_index) for ex in examples],
            self.vocab,
            self.seq_len,
        )

    def dataset(self, name: str) -> List[Example]:
        if name == "D1":
            return self.d1
        if name == "D2":
            return self.d2
        raise KeyError(name)

    def iter_batches(
        self,
        examples: Sequence[Example],
        batch_size: int,
        rng: np.random.Generator | None = None,
    ) -> Iterator[TokenBatch]:
        order = np.arange(len(examples))
        if rng is not None:
            rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            yield self.batch([examples[i] for i in order[start:start + batch_size]])

    def train_signatures(self) -> set:
        used = {ex.scene_index for ex in self.d1} | {ex.scene_index for ex in self.d2}
        return {scene_signature(self.scenes[i]) for i in used}

    def eval_signatures(self) -> set:
        return {
            scene_signature(self.scenes[ex.scene_index])
            for split in self.eval_splits.values() for ex in split
        }


# ─────────────────────────────────────────────
# Construcción
# ─────────────────────────────────────────────

def _scene(cfg: CorpusConfig, seed: int) -> SceneSpec:
    return generate_scene(seed, cfg.grid_size, cfg.min_objects, cfg.max_objects)


def _fresh_scene(cfg: CorpusConfig, stream: int, index: int, seen: Set[str]) -> SceneSpec:
    """
    Escena de entrenamiento con firma no vista. Si la semilla del índice repite
    una escena se redibuja con semillas derivadas (índice, intento).
    """
    scene = _scene(cfg, stream_seed(cfg.train_seed, stream, index))
    attempt = 0
    while scene_signature(scene) in seen and attempt < MAX_REDRAWS:
        attempt += 1
        seed = int(np.random.SeedSequence([cfg.train_seed, stream, index, attempt]).generate_state(1)[0])
        scene = _scene(cfg, seed)
    sig = scene_signature(scene)
    if sig in seen:
        log.warning("Escena repetida en el flujo %d, índice %d: la rejilla se queda corta", stream, index)
    seen.add(sig)
    return scene


def build_corpus(cfg: CorpusConfig) -> Corpus:
    """
    Corpus determinista: función pura de CorpusConfig.

    Las escenas de entrenamiento no repiten firma mientras el espacio de
    escenas lo permita; las de evaluación tampoco se repiten entre sí.
    """
    cfg.validate()
    vocab = cfg.vocab()
    scenes: List[SceneSpec] = []
    d1: List[Example] = []
    d2: List[Example] = []
    seen: Set[str] = set()

    for i in range(cfg.n_caption_pairs):
        scenes.append(_fresh_scene(cfg, _CAPTION_STREAM, i, seen))
        d1.append(caption_example(scenes[-1], len(scenes) - 1))

    for i in range(cfg.n_instruction_pairs):
        scenes.append(_fresh_scene(cfg, _INSTRUCTION_STREAM, i, seen))
        rng = np.random.default_rng(stream_seed(cfg.train_seed, _QUESTION_STREAM, i))
        d2.append(instruction_example(scenes[-1], len(scenes) - 1, rng))

    eval_splits: Dict[str, List[Example]] = {name: [] for name in EVAL_SPLITS}
    cursor = 0
    max_attempts = 50 * max(cfg.n_eval_per_split, 1) * len(EVAL_SPLITS)
    for split in EVAL_SPLITS:
        while len(eval_splits[split]) < cfg.n_eval_per_split:
            if cursor > max_attempts:
                raise RuntimeError(
                    f"No se encuentran escenas de evaluación nuevas para '{split}'; amplía la rejilla"
                )
            seed = stream_seed(cfg.eval_seed, _EVAL_STREAM, cursor)
            cursor += 1
            scene = _scene(cfg, seed)
            sig = scene_signature(scene)
            if sig in seen:
                continue
            if split == "relational" and len(scene.objects) < 2:
                continue
            seen.add(sig)
            scenes.append(scene)
            idx = len(scenes) - 1
            if split == "captioning":
                eval_splits[split].append(caption_example(scene, idx))
            else:
                rng = np.random.default_rng(seed)
                eval_splits[split].append(instruction_example(scene, idx, rng, tier=split))

    log.info(
        "Corpus: %d captions, %d instrucciones, %d evaluación (c=%d, m=%d, L=%d)",
        len(d1), len(d2), sum(len(v) for v in eval_splits.values()), len(vocab), cfg.m, cfg.seq_len,
    )
    return Corpus(cfg, vocab, scenes, d1, d2, eval_splits)


# ─────────────────────────────────────────────
# Pares sueltos
# ─────────────────────────────────────────────

def gen_caption_pair(scene: SceneSpec, cfg: CorpusConfig) -> TokenBatch:
    ex = caption_example(scene, 0)
    return collate([ex], [scene_patches(scene, cfg.cell_px)], cfg.vocab(), cfg.seq_len)


def gen_instruction_pair(
    scene: SceneSpec,
    cfg: CorpusConfig,
    rng: np.random.Generator | None = None,
    tier: str | None = None,
) -> tuple[TokenBatch, Example]:
    rng = rng if rng is not None else np.random.default_rng(scene.seed)
    ex = instruction_example(scene, 0, rng, tier)
    return collate([ex], [scene_patches(scene, cfg.cell_px)], cfg.vocab(), cfg.seq_len), ex


__all__ = [
    "CorpusConfig", "Corpus", "build_corpus", "gen_caption_pair", "gen_instruction_pair",
    "stream_seed", "QA_TIERS",
]
