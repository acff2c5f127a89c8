from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

# ─────────────────────────────────────────────
# Símbolos de la escena
# ─────────────────────────────────────────────

SHAPES: tuple = ("circle", "square", "triangle")
COLORS: tuple = ("red", "green", "blue", "yellow")

# RGB en [0, 255]
COLOR_RGB: Dict[str, tuple] = {
    "red": (230, 40, 40),
    "green": (40, 200, 60),
    "blue": (50, 80, 235),
    "yellow": (235, 220, 40),
}

NUMBER_WORDS: tuple = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")

RELATIONS: tuple = ("left", "right", "above", "below")

PAD, BOS, EOS, IMAGE = "<pad>", "<bos>", "<eos>", "<image>"
Q_COLOR, Q_COUNT, Q_SHAPE, Q_REL = "q_color", "q_count", "q_shape", "q_rel"
NONE = "none"


@dataclass
class Vocab:
    """
    Vocabulario cerrado (c clases). Determinista dado (grid_size, max_objects).
    """
    tokens: List[str]
    index: Dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("Tokens duplicados en el vocabulario")

    @classmethod
    def build(cls, grid_size: int, max_objects: int) -> "Vocab":
        if max_objects >= len(NUMBER_WORDS):
            raise ValueError(f"max_objects={max_objects} excede las palabras numéricas disponibles")
        tokens = [PAD, BOS, EOS, IMAGE, Q_COLOR, Q_COUNT, Q_SHAPE, Q_REL]
        tokens += list(COLORS)
        tokens += list(SHAPES)
        tokens += [cell_token(i) for i in range(grid_size * grid_size)]
        tokens += list(NUMBER_WORDS[: max_objects + 1])
        tokens += [NONE]
        tokens += list(RELATIONS)
        return cls(tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index[token]

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.index[t] for t in tokens]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.tokens[int(i)] for i in ids]

    @property
    def pad_id(self) -> int:
        return self.index[PAD]


def cell_token(cell: int) -> str:
    return f"cell_{cell}"
