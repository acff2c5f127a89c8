from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import List, Sequence

from settings.profiles import DEFAULT_TIERS, TIER_ORDER, TierProfile
from utils.errors import InvalidModelConfigError

DTYPES = ("float64", "float32")


@dataclass(frozen=True)
class ModelConfig:
    """
    f: R^{k×d} → R^c por posición.
    d_embed: ancho del codificador visual (común a todos los tiers).
    d_hidden: ancho del backbone; n_heads debe dividirlo.
    """
    d_embed: int
    vocab_size: int
    max_seq: int
    n_visual_tokens: int
    n_layers: int
    n_heads: int
    d_hidden: int
    capacity_tier: str
    seed: int = 0
    d_vision_in: int = 192
    mlp_ratio: int = 2
    dtype: str = "float64"

    def violations(self) -> List[str]:
        v: List[str] = []
        if self.n_visual_tokens < 1:
            v.append("n_visual_tokens ≥ 1")
        if not self.n_visual_tokens < self.max_seq:
            v.append(f"m < k (m={self.n_visual_tokens}, k={self.max_seq})")
        if self.vocab_size < 2:
            v.append(f"vocab_size ≥ 2 (c={self.vocab_size})")
        if self.n_heads < 1 or self.d_hidden % self.n_heads != 0:
            v.append(f"n_heads divide d_hidden ({self.n_heads} ∤ {self.d_hidden})")
        for name in ("d_embed", "n_layers", "d_hidden", "d_vision_in", "mlp_ratio"):
            if getattr(self, name) < 1:
                v.append(f"{name} ≥ 1")
        if self.capacity_tier not in TIER_ORDER:
            v.append(f"capacity_tier ∈ {TIER_ORDER}")
        if self.dtype not in DTYPES:
            v.append(f"dtype ∈ {DTYPES}")
        return v

    def validate(self) -> "ModelConfig":
        v = self.violations()
        if v:
            raise InvalidModelConfigError(v)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=int(seed))


def parameter_count_for(cfg: ModelConfig) -> int:
    """
    Número de parámetros sin construir el modelo.
    """
    d, h, c, k, P = cfg.d_embed, cfg.d_hidden, cfg.vocab_size, cfg.max_seq, cfg.d_vision_in
    r = cfg.mlp_ratio
    encoder = P * d + d + d * d + d
    connector = d * h + h + h * h + h
    block = 4 * h + 4 * (h * h + h) + (h * r * h + r * h) + (r * h * h + h)
    backbone = c * h + k * h + cfg.n_layers * block + 2 * h
    head = h * c + c
    return encoder + connector + backbone + head


def config_for_tier(
    tier: str,
    *,
    vocab_size: int,
    max_seq: int,
    n_visual_tokens: int,
    d_vision_in: int,
    d_embed: int = 32,
    seed: int = 0,
    dtype: str = "float64",
    profile: TierProfile | None = None,
) -> ModelConfig:
    p = profile or DEFAULT_TIERS[tier]
    return ModelConfig(
        d_embed=d_embed,
        vocab_size=vocab_size,
        max_seq=max_seq,
        n_visual_tokens=n_visual_tokens,
        n_layers=p.n_layers,
        n_heads=p.n_heads,
        d_hidden=p.d_hidden,
        capacity_tier=tier,
        seed=seed,
        d_vision_in=d_vision_in,
        dtype=dtype,
    ).validate()


def validate_tier_ladder(configs: Sequence[ModelConfig], strict: bool = True) -> None:
    """
    Los tiers deben crecer en número de parámetros (estrictamente si strict).
    """
    counts = [parameter_count_for(c) for c in configs]
    for a, b, ca, cb in zip(configs, configs[1:], counts, counts[1:]):
        bad = cb <= ca if strict else cb < ca
        if bad:
            raise InvalidModelConfigError([
                f"orden de capacidad: {a.capacity_tier}({ca}) → {b.capacity_tier}({cb})"
            ])
