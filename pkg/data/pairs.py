from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data.scene_simulator import SceneObject, SceneSpec
from data.vocab import (
    BOS, COLORS, EOS, NONE, NUMBER_WORDS, Q_COLOR, Q_COUNT, Q_REL, Q_SHAPE, SHAPES, cell_token,
)

QA_TIERS: tuple = ("lookup", "counting", "relational")
EVAL_SPLITS: tuple = ("lookup", "counting", "relational", "captioning")


@dataclass(frozen=True)
class Example:
    """
    Un par (escena, texto). `text` empieza en <bos>; `relevant[j]` indica si
    el logit de la posición textual j predice un token de respuesta.
    """
    scene_index: int
    kind: str                 # "caption" | "qa"
    tier: str                 # "captioning" | "lookup" | "counting" | "relational"
    text: Tuple[str, ...]
    relevant: Tuple[bool, ...]
    answer: Optional[str] = None

    @property
    def question(self) -> Tuple[str, ...]:
        if self.kind != "qa":
            return ()
        return self.text[1:-2]


# ─────────────────────────────────────────────
# Captions (𝔇₁)
# ─────────────────────────────────────────────

def caption_tokens(scene: SceneSpec) -> List[str]:
    """
    (color, shape) por objeto en orden raster, y <eos>.
    """
    out: List[str] = []
    for obj in scene.raster_order():
        out += [obj.color, obj.shape]
    out.append(EOS)
    return out


def render_caption(tokens: Sequence[str], grid_size: int) -> List[Tuple[str, str]]:
    """
    Renderizador oráculo: caption → lista (color, shape) en orden raster.
    """
    body = list(tokens)
    if body and body[-1] == EOS:
        body = body[:-1]
    if len(body) % 2:
        raise ValueError("Caption mal formada")
    return [(body[i], body[i + 1]) for i in range(0, len(body), 2)]


def caption_example(scene: SceneSpec, scene_index: int) -> Example:
    text = (BOS, *caption_tokens(scene))
    # Todas las posiciones salvo la de <eos> predicen un token de respuesta.
    relevant = tuple(j < len(text) - 1 for j in range(len(text)))
    return Example(scene_index, "caption", "captioning", text, relevant)


# ─────────────────────────────────────────────
# Instrucciones (𝔇₂)
# ─────────────────────────────────────────────

def _row_col(obj: SceneObject, grid_size: int) -> Tuple[int, int]:
    return divmod(obj.cell, grid_size)


def relation_between(a: SceneObject, b: SceneObject, grid_size: int) -> str:
    """
    Posición de `a` respecto de `b`; la columna manda sobre la fila.
    """
    ra, ca = _row_col(a, grid_size)
    rb, cb = _row_col(b, grid_size)
    if ca < cb:
        return "left"
    if ca > cb:
        return "right"
    return "above" if ra < rb else "below"


def _ask_lookup(scene: SceneSpec, rng: np.random.Generator) -> Tuple[List[str], str]:
    counts = {s: sum(1 for o in scene.objects if o.shape == s) for s in SHAPES}
    unique = [s for s in SHAPES if counts[s] == 1]
    if unique and rng.random() < 0.5:
        shape = unique[int(rng.integers(len(unique)))]
        obj = next(o for o in scene.objects if o.shape == shape)
        return [Q_COLOR, shape], obj.color

    n_cells = scene.grid_size * scene.grid_size
    if scene.objects and rng.random() < 0.5:
        cell = scene.objects[int(rng.integers(len(scene.objects)))].cell
    else:
        cell = int(rng.integers(n_cells))
    obj = scene.object_at(cell)
    return [Q_SHAPE, cell_token(cell)], obj.shape if obj else NONE


def _ask_counting(scene: SceneSpec, rng: np.random.Generator) -> Tuple[List[str], str]:
    color = COLORS[int(rng.integers(len(COLORS)))]
    n = sum(1 for o in scene.objects if o.color == color)
    return [Q_COUNT, color], NUMBER_WORDS[n]


def _ask_relational(scene: SceneSpec, rng: np.random.Generator) -> Tuple[List[str], str]:
    i, j = rng.choice(len(scene.objects), size=2, replace=False)
    a, b = scene.objects[int(i)], scene.objects[int(j)]
    return [Q_REL, a.color, a.shape, b.color, b.shape], relation_between(a, b, scene.grid_size)


_ASKERS = {
    "lookup": _ask_lookup,
    "counting": _ask_counting,
    "relational": _ask_relational,
}


def available_tiers(scene: SceneSpec) -> List[str]:
    if not scene.objects:
        return []
    tiers = ["lookup", "counting"]
    if len(scene.objects) >= 2:
        tiers.append("relational")
    return tiers


def instruction_example(
    scene: SceneSpec,
    scene_index: int,
    rng: np.random.Generator,
    tier: str | None = None,
) -> Example:
    tiers = available_tiers(scene)
    if not tiers:
        raise ValueError("Una instrucción requiere al menos un objeto en la escena")
    if tier is None:
        tier = tiers[int(rng.integers(len(tiers)))]
    elif tier not in tiers:
        raise ValueError(f"Tier '{tier}' no disponible para esta escena")

    question, answer = _ASKERS[tier](scene, rng)
    text = (BOS, *question, answer, EOS)
    answer_pos = len(text) - 2
    # Sólo el logit que predice la respuesta es relevante.
    relevant = tuple(j == answer_pos - 1 for j in range(len(text)))
    return Example(scene_index, "qa", tier, text, relevant, answer)


# ─────────────────────────────────────────────
# Oráculo simbólico
# ─────────────────────────────────────────────

def _find(scene: SceneSpec, color: str, shape: str) -> SceneObject:
    for o in scene.objects:
        if o.color == color and o.shape == shape:
            return o
    raise ValueError(f"No existe {color} {shape} en la escena")


def answer_oracle(scene: SceneSpec, question: Sequence[str]) -> str:
    """
    Resuelve una pregunta leyendo sólo la escena y los tokens de la pregunta.
    """
    if not question:
        raise ValueError("Pregunta vacía")
    head, args = question[0], list(question[1:])

    if head == Q_COLOR:
        matches = [o for o in scene.objects if o.shape == args[0]]
        if len(matches) != 1:
            raise ValueError(f"Pregunta ambigua: {len(matches)} objetos '{args[0]}'")
        return matches[0].color

    if head == Q_SHAPE:
        cell = int(args[0].split("_", 1)[1])
        obj = scene.object_at(cell)
        return obj.shape if obj else NONE

    if head == Q_COUNT:
        return NUMBER_WORDS[sum(1 for o in scene.objects if o.color == args[0])]

    if head == Q_REL:
        a = _find(scene, args[0], args[1])
        b = _find(scene, args[2], args[3])
        return relation_between(a, b, scene.grid_size)

    raise ValueError(f"Plantilla desconocida: {head}")
