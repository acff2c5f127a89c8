from __future__ import annotations
from dataclasses import dataclass
from typing import Dict


@dataclass
class TierProfile:
    name: str
    n_layers: int
    d_hidden: int
    n_heads: int

    @property
    def head_dim(self) -> int:
        return self.d_hidden // self.n_heads


# ─────────────────────────────────────────────
# Escalera de capacidades (×2 por peldaño, editable)
# ─────────────────────────────────────────────

TIER_ORDER = ("student", "assistant", "teacher")

DEFAULT_TIERS: Dict[str, TierProfile] = {
    "student": TierProfile(
        name="student",
        n_layers=1,
        d_hidden=16,
        n_heads=1
    ),

    "assistant": TierProfile(
        name="assistant",
        n_layers=2,
        d_hidden=32,
        n_heads=2
    ),

    "teacher": TierProfile(
        name="teacher",
        n_layers=4,
        d_hidden=64,
        n_heads=4
    ),
}


def tier_rank(name: str) -> int:
    if name not in TIER_ORDER:
        raise KeyError(f"Tier desconocido: {name}")
    return TIER_ORDER.index(name)
