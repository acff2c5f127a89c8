from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Protocol, Sequence

import numpy as np

from autodiff.tensor import no_grad
from data.batch import TokenBatch
from data.corpus import Corpus
from data.pairs import EVAL_SPLITS, Example
from losses.bundle import LogitBundle

log = logging.getLogger(__name__)


class Predictor(Protocol):
    def forward(self, batch: TokenBatch) -> LogitBundle: ...


@dataclass
class EvalSplit:
    """
    Split de evaluación retenido: escenas cuyas firmas no aparecen en entrenamiento.
    """
    name: str
    examples: List[Example]
    corpus: Corpus

    def __len__(self) -> int:
        return len(self.examples)

    def batches(self, batch_size: int):
        for start in range(0, len(self.examples), batch_size):
            yield self.corpus.batch(self.examples[start:start + batch_size])


def eval_splits(corpus: Corpus, names: Sequence[str] = EVAL_SPLITS) -> List[EvalSplit]:
    return [EvalSplit(name, corpus.eval_splits[name], corpus) for name in names]


def greedy_hits(bundle: LogitBundle, token_ids: np.ndarray) -> tuple[int, int]:
    """
    Aciertos de argmax en posiciones textuales relevantes frente al token siguiente.
    """
    B, L, _ = bundle.shape
    pos = np.arange(L)
    sel = bundle.relevance_mask & (pos >= bundle.m)[None, :] & (pos < L - 1)[None, :]
    pred = np.argmax(bundle.logits.data, axis=-1)
    nxt = np.zeros_like(token_ids)
    nxt[:, :-1] = token_ids[:, 1:]
    hits = (pred == nxt) & sel
    return int(hits.sum()), int(sel.sum())


def evaluate(model: Predictor, split: EvalSplit, batch_size: int = 64) -> float:
    """
    Exactitud por decodificación voraz: una posición por pregunta;
    en captioning, fracción de tokens acertados.
    """
    if len(split) == 0:
        raise ValueError(f"Split de evaluación vacío: {split.name}")

    hits = total = 0
    with no_grad():
        for batch in split.batches(batch_size):
            h, n = greedy_hits(model.forward(batch), batch.token_ids)
            hits += h
            total += n
    if total == 0:
        raise ValueError(f"Split sin posiciones de respuesta: {split.name}")
    return hits / total


def evaluate_all(model: Predictor, corpus: Corpus, splits: Sequence[str] = EVAL_SPLITS) -> Dict[str, float]:
    scores = {s.name: evaluate(model, s) for s in eval_splits(corpus, splits)}
    log.debug("Evaluación: %s", scores)
    return scores
