from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import cv2
import numpy as np

from data.vocab import COLOR_RGB, COLORS, SHAPES


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    cell: int


@dataclass(frozen=True)
class SceneSpec:
    grid_size: int
    objects: Tuple[SceneObject, ...]
    seed: int

    def object_at(self, cell: int) -> SceneObject | None:
        for obj in self.objects:
            if obj.cell == cell:
                return obj
        return None

    def raster_order(self) -> List[SceneObject]:
        return sorted(self.objects, key=lambda o: o.cell)

    def validate(self) -> None:
        cells = [o.cell for o in self.objects]
        if len(set(cells)) != len(cells):
            raise ValueError("Objetos en celdas repetidas")
        n_cells = self.grid_size * self.grid_size
        for o in self.objects:
            if not 0 <= o.cell < n_cells:
                raise ValueError(f"Celda fuera de la rejilla: {o.cell}")
            if o.shape not in SHAPES or o.color not in COLORS:
                raise ValueError(f"Objeto fuera del vocabulario: {o}")


def scene_signature(scene: SceneSpec) -> str:
    """
    Firma canónica (independiente de la semilla) para deduplicar escenas.
    """
    parts = [f"{o.cell}:{o.color}:{o.shape}" for o in scene.raster_order()]
    return f"g{scene.grid_size}|" + ",".join(parts)


def generate_scene(
    seed: int,
    grid_size: int = 4,
    min_objects: int = 1,
    max_objects: int = 3,
) -> SceneSpec:
    """
    Genera una escena sintética: objetos en celdas distintas y con
    identidades (forma, color) distintas.
    """
    rng = np.random.default_rng(seed)
    n_cells = grid_size * grid_size
    max_objects = min(max_objects, n_cells, len(SHAPES) * len(COLORS))
    n = int(rng.integers(min_objects, max_objects + 1))

    cells = rng.choice(n_cells, size=n, replace=False)
    identities = rng.choice(len(SHAPES) * len(COLORS), size=n, replace=False)

    objects = []
    for cell, ident in zip(cells, identities):
        shape = SHAPES[int(ident) // len(COLORS)]
        color = COLORS[int(ident) % len(COLORS)]
        objects.append(SceneObject(shape=shape, color=color, cell=int(cell)))

    scene = SceneSpec(grid_size=grid_size, objects=tuple(sorted(objects, key=lambda o: o.cell)), seed=int(seed))
    scene.validate()
    return scene


# ─────────────────────────────────────────────
# Render
# ─────────────────────────────────────────────

def _draw_object(img: np.ndarray, obj: SceneObject, grid_size: int, cell_px: int) -> None:
    row, col = divmod(obj.cell, grid_size)
    x0, y0 = col * cell_px, row * cell_px
    color = COLOR_RGB[obj.color]
    pad = max(1, cell_px // 8)
    x1, y1 = x0 + cell_px - 1 - pad, y0 + cell_px - 1 - pad
    x0, y0 = x0 + pad, y0 + pad

    if obj.shape == "circle":
        center = ((x0 + x1) // 2, (y0 + y1) // 2)
        radius = max(1, (x1 - x0) // 2)
        cv2.circle(img, center, radius, color, -1)
    elif obj.shape == "square":
        cv2.rectangle(img, (x0, y0), (x1, y1), color, -1)
    else:
        pts = np.array([[(x0 + x1) // 2, y0], [x0, y1], [x1, y1]], dtype=np.int32)
        cv2.fillPoly(img, [pts], color)


def render_scene(scene: SceneSpec, cell_px: int = 8) -> np.ndarray:
    """
    Imagen RGB uint8 de (g·cell_px) × (g·cell_px).
    """
    side = scene.grid_size * cell_px
    img = np.zeros((side, side, 3), dtype=np.uint8)
    for obj in scene.objects:
        _draw_object(img, obj, scene.grid_size, cell_px)
    return img


def scene_patches(scene: SceneSpec, cell_px: int = 8) -> np.ndarray:
    """
    Parches en orden raster: (g², cell_px·cell_px·3) normalizados a [0, 1].
    Son las m entradas visuales del modelo.
    """
    img = render_scene(scene, cell_px).astype(np.float64) / 255.0
    g = scene.grid_size
    patches = img.reshape(g, cell_px, g, cell_px, 3).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(patches.reshape(g * g, cell_px * cell_px * 3))


def gen_scene(
    seed: int,
    grid_size: int = 4,
    cell_px: int = 8,
    min_objects: int = 1,
    max_objects: int = 3,
) -> Tuple[SceneSpec, np.ndarray]:
    scene = generate_scene(seed, grid_size, min_objects, max_objects)
    return scene, scene_patches(scene, cell_px)
