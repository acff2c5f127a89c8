"""
Familia de pérdidas de destilación sobre LogitBundle.

Cada término se normaliza por su número de posiciones (o secuencias, en la
pérdida de coseno) salvo que `raw_sums` pida las sumas literales.
El lado del profesor es siempre constante: nunca recibe gradiente.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from autodiff import ops
from autodiff.ops import log_softmax_np, softmax_np
from autodiff.tensor import Tensor, constant, no_grad
from losses.bundle import LogitBundle
from utils.errors import (
    DegenerateVisualLogitsError, EmptyLossSupportError, MaskMismatchError,
    NoVisualTokensError, ShapeError,
)

VISUAL, TEXT = "visual", "text"


@dataclass
class LossWeights:
    tau1: float = 1.0          # L_td
    tau2: float = 1.0          # L_vd
    tau3: float = 1.0          # L_vc
    temperature: float = 1.0
    raw_sums: bool = False

    def validate(self) -> None:
        if min(self.tau1, self.tau2, self.tau3) < 0:
            raise ValueError("Los pesos τ deben ser ≥ 0")
        if self.temperature <= 0:
            raise ValueError("La temperatura debe ser > 0")


@dataclass
class DftLoss:
    total: Tensor
    terms: Dict[str, float] = field(default_factory=dict)

    def value(self) -> float:
        return self.total.item()


def _zero(like: Tensor) -> Tensor:
    return constant(np.zeros((), dtype=like.dtype))


def _normalize(total: Tensor, count: int, raw_sums: bool) -> Tensor:
    return total if raw_sums else ops.scale(total, 1.0 / count)


def _full_mask(sel: np.ndarray, c: int) -> np.ndarray:
    return np.broadcast_to(sel[..., None], sel.shape + (c,))


def check_compatible(teacher: LogitBundle, student: LogitBundle) -> None:
    if teacher.shape != student.shape:
        raise ShapeError("kd", [teacher.shape, student.shape], "bundles de forma distinta")
    if teacher.m != student.m:
        raise MaskMismatchError(f"m distinto: profesor={teacher.m}, alumno={student.m}")
    if not np.array_equal(teacher.relevance_mask, student.relevance_mask):
        raise MaskMismatchError("Máscaras de relevancia distintas entre profesor y alumno")


# ─────────────────────────────────────────────
# L_rg
# ─────────────────────────────────────────────

def autoregressive_loss(bundle: LogitBundle, raw_sums: bool = False) -> Tensor:
    """
    −Σ_i Σ_j y_{i+1,j} ln p_{i,j} sobre posiciones textuales relevantes i < L−1.
    """
    B, L, c = bundle.shape
    pos = np.arange(L)
    sel = bundle.relevance_mask & (pos >= bundle.m)[None, :] & (pos < L - 1)[None, :]
    count = int(sel.sum())
    if count == 0:
        raise EmptyLossSupportError("empty loss support: ninguna posición relevante para L_rg")

    y_next = np.zeros_like(bundle.targets)
    y_next[:, :-1] = bundle.targets[:, 1:]
    weights = (y_next * sel[..., None]).astype(bundle.logits.dtype)

    z = ops.mask_fill(bundle.logits, ~_full_mask(sel, c), 0.0)
    logp = ops.log_softmax(z)
    total = ops.scale(ops.sum(ops.mul(logp, constant(weights))), -1.0)
    return _normalize(total, count, raw_sums)


# ─────────────────────────────────────────────
# L_vd / L_td
# ─────────────────────────────────────────────

def kd_kl_loss(
    teacher: LogitBundle,
    student: LogitBundle,
    range_: str,
    temperature: float = 1.0,
    raw_sums: bool = False,
) -> Tensor:
    """
    Σ_i KL(σ(s_i/T) ‖ σ(z_i/T)) sobre el rango de modalidad elegido.
    Rango vacío → 0.
    """
    check_compatible(teacher, student)
    if range_ not in (VISUAL, TEXT):
        raise ValueError(f"Rango desconocido: {range_}")

    B, L, c = student.shape
    pos = np.arange(L)
    in_range = pos < student.m if range_ == VISUAL else pos >= student.m
    sel = student.relevance_mask & in_range[None, :]
    count = int(sel.sum())
    if count == 0:
        return _zero(student.logits)

    full = _full_mask(sel, c)
    inv_t = 1.0 / float(temperature)

    # Mismo camino numérico que el lado del alumno: KL(p‖p) da 0 exacto.
    t_logits = np.where(full, teacher.logits.data, 0.0).astype(student.logits.dtype) * inv_t
    p_t = softmax_np(t_logits) * full
    logp_t = log_softmax_np(t_logits)

    z = ops.scale(ops.mask_fill(student.logits, ~full, 0.0), inv_t)
    logq = ops.log_softmax(z)
    diff = ops.sub(constant(logp_t), logq)
    total = ops.sum(ops.mul(constant(p_t.astype(student.logits.dtype)), diff))
    return _normalize(total, count, raw_sums)


# ─────────────────────────────────────────────
# L_vc
# ─────────────────────────────────────────────

def visual_gram(bundle: LogitBundle) -> Tensor:
    """
    G = Zᵀ Z por secuencia, con Z = [z_1 … z_m] (G_ij = z_iᵀ z_j): (B, m, m).
    """
    m = bundle.m
    if m <= 0:
        raise NoVisualTokensError("no visual tokens: m = 0")
    c = bundle.vocab_size
    z = ops.gather(bundle.logits, np.arange(m), axis=1)
    keep = bundle.relevance_mask[:, :m]
    z = ops.mask_fill(z, ~_full_mask(keep, c), 0.0)
    return ops.matmul(z, ops.transpose(z, -1, -2))


def visual_cosine_loss(teacher: LogitBundle, student: LogitBundle, raw_sums: bool = False) -> Tensor:
    """
    1 − cos(vec G_t, vec G_s), media sobre secuencias con tokens visuales relevantes.
    """
    check_compatible(teacher, student)
    m = student.m
    if m <= 0:
        raise NoVisualTokensError("no visual tokens: m = 0")

    rows = np.flatnonzero(student.relevance_mask[:, :m].any(axis=1))
    if rows.size == 0:
        return _zero(student.logits)

    with no_grad():
        g_t = visual_gram(teacher.detached()).data[rows]
    g_s = visual_gram(student)
    g_s = ops.gather(g_s, rows, axis=0)

    n_t = np.sqrt(np.sum(g_t * g_t, axis=(1, 2)))
    n_s = np.sqrt(np.sum(g_s.data * g_s.data, axis=(1, 2)))
    if np.any(n_t == 0.0) or np.any(n_s == 0.0):
        raise DegenerateVisualLogitsError("degenerate visual logits: Gram de norma cero")

    dot = ops.sum(ops.mul(g_s, constant(g_t.astype(g_s.dtype))), axis=(1, 2))
    ss = ops.sum(ops.mul(g_s, g_s), axis=(1, 2))
    inv_ns = ops.power(ss, -0.5)
    cos = ops.mul(ops.mul(dot, inv_ns), constant((1.0 / n_t).astype(g_s.dtype)))

    total = ops.add(constant(np.asarray(float(rows.size), dtype=g_s.dtype)), ops.scale(ops.sum(cos), -1.0))
    return _normalize(total, int(rows.size), raw_sums)


# ─────────────────────────────────────────────
# L_dft
# ─────────────────────────────────────────────

def dft_loss(teacher: LogitBundle, student: LogitBundle, w: LossWeights) -> DftLoss:
    """
    L_dft = L_rg + τ1·L_td + τ2·L_vd + τ3·L_vc, con desglose por término.
    Los términos de peso 0 se evalúan sin grafo, sólo para el registro.
    """
    w.validate()
    check_compatible(teacher, student)

    rg = autoregressive_loss(student, w.raw_sums)
    total = rg
    terms = {"rg": rg.item()}

    parts = (
        ("td", w.tau1, lambda: kd_kl_loss(teacher, student, TEXT, w.temperature, w.raw_sums)),
        ("vd", w.tau2, lambda: kd_kl_loss(teacher, student, VISUAL, w.temperature, w.raw_sums)),
        ("vc", w.tau3, lambda: visual_cosine_loss(teacher, student, w.raw_sums)),
    )
    for name, tau, fn in parts:
        if tau > 0:
            term = fn()
            terms[name] = term.item()
            total = ops.add(total, ops.scale(term, tau))
        else:
            with no_grad():
                try:
                    terms[name] = fn().item()
                except DegenerateVisualLogitsError:
                    terms[name] = float("nan")

    return DftLoss(total, terms)
