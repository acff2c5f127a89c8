from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from data.pairs import Example
from data.vocab import IMAGE, PAD, Vocab


@dataclass(frozen=True)
class TokenBatch:
    """
    Lote de secuencias de longitud fija L = m + texto.

    patches:        (B, m, P) entradas visuales (las m primeras posiciones).
    token_ids:      (B, L) clase del token en cada posición (<image> en las visuales).
    targets:        (B, L, c) one-hot de token_ids (y_i); filas suman 1.
    relevance_mask: (B, L) True si el logit de la posición participa en las pérdidas.
    """
    patches: np.ndarray
    token_ids: np.ndarray
    targets: np.ndarray
    relevance_mask: np.ndarray
    m: int

    @property
    def batch_size(self) -> int:
        return int(self.token_ids.shape[0])

    @property
    def seq_len(self) -> int:
        return int(self.token_ids.shape[1])

    @property
    def vocab_size(self) -> int:
        return int(self.targets.shape[2])

    def select(self, rows: Sequence[int]) -> "TokenBatch":
        rows = np.asarray(rows, dtype=np.int64)
        return TokenBatch(
            self.patches[rows], self.token_ids[rows], self.targets[rows],
            self.relevance_mask[rows], self.m,
        )


def one_hot(ids: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros(ids.shape + (c,), dtype=np.float64)
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def collate(
    examples: Sequence[Example],
    patches: Sequence[np.ndarray],
    vocab: Vocab,
    seq_len: int,
) -> TokenBatch:
    """
    Une ejemplos en un TokenBatch, rellenando con <pad> (irrelevante) hasta seq_len.
    """
    if len(examples) != len(patches):
        raise ValueError("Número de ejemplos y de parches distinto")
    if not examples:
        raise ValueError("Lote vacío")

    m = int(patches[0].shape[0])
    B = len(examples)
    ids = np.full((B, seq_len), vocab.id(PAD), dtype=np.int64)
    rel = np.zeros((B, seq_len), dtype=bool)

    for b, ex in enumerate(examples):
        if m + len(ex.text) > seq_len:
            raise ValueError(f"Secuencia de {m + len(ex.text)} posiciones excede seq_len={seq_len}")
        ids[b, :m] = vocab.id(IMAGE)
        ids[b, m:m + len(ex.text)] = vocab.ids(ex.text)
        rel[b, :m] = True
        rel[b, m:m + len(ex.text)] = ex.relevant

    return TokenBatch(
        patches=np.stack([np.asarray(p, dtype=np.float64) for p in patches]),
        token_ids=ids,
        targets=one_hot(ids, len(vocab)),
        relevance_mask=rel,
        m=m,
    )


def padding_batch(batch_size: int, m: int, patch_dim: int, vocab: Vocab, seq_len: int) -> TokenBatch:
    """
    Lote sólo de relleno: ninguna posición es relevante.
    """
    ids = np.full((batch_size, seq_len), vocab.id(PAD), dtype=np.int64)
    ids[:, :m] = vocab.id(IMAGE)
    return TokenBatch(
        patches=np.zeros((batch_size, m, patch_dim)),
        token_ids=ids,
        targets=one_hot(ids, len(vocab)),
        relevance_mask=np.zeros((batch_size, seq_len), dtype=bool),
        m=m,
    )
