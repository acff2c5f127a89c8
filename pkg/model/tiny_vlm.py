from __future__ import annotations

import logging
import math
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from data.batch import TokenBatch
from losses.bundle import LogitBundle
from model.checkpoint import Checkpoint
from model.config import ModelConfig
from utils.errors import CheckpointError, IncompatibleModelsError, ShapeError

log = logging.getLogger(__name__)

PARTS = ("encoder", "connector", "backbone", "head")

_MASK_VALUE = -1e9


def part_of(name: str) -> str:
    return name.split(".", 1)[0]


# ─────────────────────────────────────────────
# Inicialización
# ─────────────────────────────────────────────

class _Init:
    def __init__(self, seed: int, part: str, dtype: str):
        self.rng = np.random.default_rng([int(seed), PARTS.index(part)])
        self.dtype = dtype

    def linear(self, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
        w = self.rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))
        return w.astype(self.dtype), np.zeros(fan_out, dtype=self.dtype)

    def embedding(self, n: int, dim: int) -> np.ndarray:
        return self.rng.normal(0.0, 0.02, size=(n, dim)).astype(self.dtype)

    def norm(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        return np.ones(dim, dtype=self.dtype), np.zeros(dim, dtype=self.dtype)


def init_parameters(cfg: ModelConfig) -> Dict[str, np.ndarray]:
    d, h, c = cfg.d_embed, cfg.d_hidden, cfg.vocab_size
    p: Dict[str, np.ndarray] = {}

    enc = _Init(cfg.seed, "encoder", cfg.dtype)
    p["encoder.w1"], p["encoder.b1"] = enc.linear(cfg.d_vision_in, d)
    p["encoder.w2"], p["encoder.b2"] = enc.linear(d, d)

    con = _Init(cfg.seed, "connector", cfg.dtype)
    p["connector.w1"], p["connector.b1"] = con.linear(d, h)
    p["connector.w2"], p["connector.b2"] = con.linear(h, h)

    bb = _Init(cfg.seed, "backbone", cfg.dtype)
    p["backbone.tok_embed"] = bb.embedding(c, h)
    p["backbone.pos_embed"] = bb.embedding(cfg.max_seq, h)
    for i in range(cfg.n_layers):
        pre = f"backbone.blocks.{i}"
        p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"] = bb.norm(h)
        for proj in ("q", "k", "v", "o"):
            p[f"{pre}.attn.w{proj}"], p[f"{pre}.attn.b{proj}"] = bb.linear(h, h)
        p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"] = bb.norm(h)
        p[f"{pre}.mlp.w1"], p[f"{pre}.mlp.b1"] = bb.linear(h, cfg.mlp_ratio * h)
        p[f"{pre}.mlp.w2"], p[f"{pre}.mlp.b2"] = bb.linear(cfg.mlp_ratio * h, h)
    p["backbone.ln_f.g"], p["backbone.ln_f.b"] = bb.norm(h)

    head = _Init(cfg.seed, "head", cfg.dtype)
    p["head.w"], p["head.b"] = head.linear(h, c)
    return p


# ─────────────────────────────────────────────
# Modelo
# ─────────────────────────────────────────────

class TinyVlm:
    """
    Encoder de parches → conector MLP2x_GELU → backbone causal pre-LN → cabeza lineal.

    Un forward produce logits (B, L, c); las m primeras posiciones son visuales.
    """

    def __init__(self, config: ModelConfig, params: Mapping[str, np.ndarray]):
        self.config = config
        self.params: Dict[str, Tensor] = {
            name: Tensor(np.array(arr, dtype=config.dtype, copy=True), name=name)
            for name, arr in params.items()
        }
        self.trainable_parts: frozenset = frozenset()

    # ─────────────────────────────────────────────
    # Parámetros
    # ─────────────────────────────────────────────

    def named_parameters(self, part: str | None = None) -> Dict[str, Tensor]:
        if part is None:
            return dict(self.params)
        return {n: t for n, t in self.params.items() if part_of(n) == part}

    def parameter_count(self, part: str | None = None) -> int:
        return int(sum(t.size for t in self.named_parameters(part).values()))

    def set_trainable(self, parts: Iterable[str]) -> None:
        parts = frozenset(parts)
        unknown = parts - set(PARTS)
        if unknown:
            raise ValueError(f"Partes desconocidas: {sorted(unknown)}")
        self.trainable_parts = parts
        for name, t in self.params.items():
            t.requires_grad = part_of(name) in parts
            t.grad = None

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if t.requires_grad}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray], parts: Sequence[str] | None = None) -> None:
        """
        Copia tensores de `state`; con `parts`, sólo los de esas partes.
        """
        for name, t in self.params.items():
            if parts is not None and part_of(name) not in parts:
                continue
            if name not in state:
                raise CheckpointError(f"Falta el tensor '{name}'")
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise CheckpointError(f"Forma distinta en '{name}': {arr.shape} ≠ {t.shape}")
            t.data = np.array(arr, dtype=self.config.dtype, copy=True)

    def to_checkpoint(self, provenance: Sequence[str] = ()) -> Checkpoint:
        return Checkpoint(self.config, self.state_dict(), list(provenance))

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "TinyVlm":
        model = cls(ckpt.config, init_parameters(ckpt.config))
        model.load_state(ckpt.tensors)
        return model

    # ─────────────────────────────────────────────
    # Forward
    # ─────────────────────────────────────────────

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    def _linear(self, x: Tensor, prefix: str, idx: str = "") -> Tensor:
        return ops.add(ops.matmul(x, self._p(f"{prefix}.w{idx}")), self._p(f"{prefix}.b{idx}"))

    def encode(self, patches: np.ndarray) -> Tensor:
        x = Tensor(np.asarray(patches, dtype=self.config.dtype))
        if x.shape[-1] != self.config.d_vision_in:
            raise ShapeError("encode", [x.shape], f"se esperaban parches de {self.config.d_vision_in}")
        x = ops.gelu(self._linear(x, "encoder", "1"))
        return self._linear(x, "encoder", "2")

    def _connect(self, z: Tensor) -> Tensor:
        z = ops.gelu(self._linear(z, "connector", "1"))
        return self._linear(z, "connector", "2")

    def _block(self, x: Tensor, i: int, causal: np.ndarray) -> Tensor:
        cfg = self.config
        pre = f"backbone.blocks.{i}"
        B, L, h = x.shape
        H = cfg.n_heads
        dh = h // H

        a = ops.layer_norm(x, self._p(f"{pre}.ln1.g"), self._p(f"{pre}.ln1.b"))

        def heads(t: Tensor) -> Tensor:
            return ops.transpose(ops.reshape(t, (B, L, H, dh)), 1, 2)

        q = heads(self._linear(a, f"{pre}.attn", "q"))
        k = heads(self._linear(a, f"{pre}.attn", "k"))
        v = heads(self._linear(a, f"{pre}.attn", "v"))

        scores = ops.scale(ops.matmul(q, ops.transpose(k, -1, -2)), 1.0 / math.sqrt(dh))
        scores = ops.mask_fill(scores, np.broadcast_to(causal, scores.shape), _MASK_VALUE)
        ctx = ops.matmul(ops.softmax(scores), v)
        ctx = ops.reshape(ops.transpose(ctx, 1, 2), (B, L, h))
        x = ops.add(x, self._linear(ctx, f"{pre}.attn", "o"))

        b = ops.layer_norm(x, self._p(f"{pre}.ln2.g"), self._p(f"{pre}.ln2.b"))
        b = ops.gelu(self._linear(b, f"{pre}.mlp", "1"))
        return ops.add(x, self._linear(b, f"{pre}.mlp", "2"))

    def forward(self, batch: TokenBatch) -> LogitBundle:
        cfg = self.config
        B, L = batch.token_ids.shape
        m = batch.m
        if L > cfg.max_seq:
            raise ShapeError("forward", [(B, L)], f"secuencia más larga que k={cfg.max_seq}")
        if m != cfg.n_visual_tokens:
            raise ShapeError("forward", [(m,), (cfg.n_visual_tokens,)], "m del lote distinto del modelo")
        if batch.vocab_size != cfg.vocab_size:
            raise ShapeError("forward", [batch.targets.shape], f"vocabulario distinto de c={cfg.vocab_size}")

        visual = self._connect(self.encode(batch.patches))                              # (B, m, h)
        text = ops.gather(self._p("backbone.tok_embed"), batch.token_ids[:, m:], axis=0)  # (B, L−m, h)
        x = ops.concat([visual, text], axis=1)
        pos = ops.gather(self._p("backbone.pos_embed"), np.tile(np.arange(L), (B, 1)), axis=0)
        x = ops.add(x, pos)

        causal = np.triu(np.ones((L, L), dtype=bool), k=1)
        for i in range(cfg.n_layers):
            x = self._block(x, i, causal)

        x = ops.layer_norm(x, self._p("backbone.ln_f.g"), self._p("backbone.ln_f.b"))
        logits = ops.add(ops.matmul(x, self._p("head.w")), self._p("head.b"))
        return LogitBundle(logits, m, batch.relevance_mask, batch.targets)

    __call__ = forward


# ─────────────────────────────────────────────
# API funcional
# ─────────────────────────────────────────────

def build_model(
    config: ModelConfig,
    pretrained: Checkpoint | None = None,
    load_parts: Sequence[str] = ("encoder",),
) -> TinyVlm:
    """
    Parámetros deterministas dados (config, seed). Con `pretrained`, las partes
    `load_parts` se copian del checkpoint; el conector siempre se inicializa de nuevo.
    """
    config.validate()
    model = TinyVlm(config, init_parameters(config))
    if pretrained is not None:
        if "connector" in load_parts:
            raise ValueError("El conector se inicializa siempre de nuevo")
        model.load_state(pretrained.tensors, parts=load_parts)
    log.debug(
        "Modelo %s: %d parámetros (h=%d, capas=%d, cabezas=%d)",
        config.capacity_tier, model.parameter_count(), config.d_hidden, config.n_layers, config.n_heads,
    )
    return model


def forward(model: TinyVlm, batch: TokenBatch) -> LogitBundle:
    return model.forward(batch)


def set_trainable(model: TinyVlm, parts: Iterable[str]) -> None:
    model.set_trainable(parts)


def check_same_interface(a: ModelConfig, b: ModelConfig) -> None:
    """
    Profesor y alumno deben compartir tokenizador (c), m y k.
    """
    problems: List[str] = []
    for name in ("vocab_size", "n_visual_tokens", "max_seq", "d_vision_in"):
        if getattr(a, name) != getattr(b, name):
            problems.append(f"{name}: {getattr(a, name)} ≠ {getattr(b, name)}")
    if problems:
        raise IncompatibleModelsError("Modelos incompatibles: " + "; ".join(problems))
