from __future__ import annotations

from dataclasses import dataclass

from bounds.params import BoundParams
from utils.errors import BoundDomainError

PAIRS = ("student_teacher", "student_ta", "distilled_teacher")
ROLES = ("student", "assistant", "teacher", "distilled")


def bound_value(C: float, n: float, a: float, eps: float, K: float = 1.0) -> float:
    """
    K·C / n^a + eps
    """
    if n < 1:
        raise BoundDomainError(f"n ≥ 1 (n={n})")
    if C <= 0:
        raise BoundDomainError(f"C > 0 (C={C})")
    if not 0.5 <= a <= 1.0:
        raise BoundDomainError(f"a ∈ [0.5, 1] (a={a})")
    if eps < 0:
        raise BoundDomainError(f"eps ≥ 0 (eps={eps})")
    if K <= 0:
        raise BoundDomainError(f"K > 0 (K={K})")
    return K * C / n ** a + eps


def direct_bound(p: BoundParams, role: str) -> float:
    """
    Entrenamiento directo, sin destilación: R(f_x) − R(f).
    """
    table = {
        "student": (p.C_s, p.a_s, p.eps_s),
        "assistant": (p.C_a, p.a_a, p.eps_a),
        "teacher": (p.C_t, p.a_t, p.eps_t),
        "distilled": (p.c_sbar, p.a_sbar, p.eps_sbar),
    }
    if role not in table:
        raise KeyError(f"Rol desconocido: {role}")
    C, a, eps = table[role]
    return bound_value(C, p.n, a, eps, p.K)


def _pair(p: BoundParams, pair: str):
    """
    (C_inferior, C_superior, a_par, ε_par, a_superior, ε_superior)
    """
    if pair == "student_teacher":
        return p.C_s, p.C_t, p.a_st, p.eps_st, p.a_t, p.eps_t
    if pair == "student_ta":
        return p.C_s, p.C_a, p.a_sa, p.eps_sa, p.a_a, p.eps_a
    if pair == "distilled_teacher":
        return p.c_sbar, p.C_t, p.a_sbart, p.eps_sbart, p.a_t, p.eps_t
    raise KeyError(f"Par desconocido: {pair} (usa {', '.join(PAIRS)})")


def kd_bound(p: BoundParams, pair: str) -> float:
    """
    K·(C₁+C₂)/n^{a_par} + ε_par + ε_superior
    """
    c_lo, c_hi, a, eps, _, eps_hi = _pair(p, pair)
    return bound_value(c_lo + c_hi, p.n, a, eps + eps_hi, p.K)


def chained_bound(p: BoundParams, pair: str) -> float:
    """
    Suma de las dos cotas encadenadas antes de unificar el exponente.
    """
    c_lo, c_hi, a, eps, a_hi, eps_hi = _pair(p, pair)
    return bound_value(c_lo, p.n, a, eps, p.K) + bound_value(c_hi, p.n, a_hi, eps_hi, p.K)


def tightening_holds(p: BoundParams, pair: str) -> bool:
    """
    Con a_par ≤ a_superior la cota combinada domina a la encadenada.
    """
    _, _, a, _, a_hi, _ = _pair(p, pair)
    if a > a_hi:
        return False
    return kd_bound(p, pair) >= chained_bound(p, pair)


@dataclass(frozen=True)
class CkdVerdict:
    holds: bool
    lhs: float
    rhs: float
    margin: float


def ckd_wins(p: BoundParams) -> CkdVerdict:
    """
    LHS = K(|F_s̄|+|F_t|)/n^{a_s̄t} + ε_s̄t  ≤  RHS = K(|F_s|+|F_t|)/n^{a_st} + ε_st
    """
    lhs = bound_value(p.c_sbar + p.C_t, p.n, p.a_sbart, p.eps_sbart, p.K)
    rhs = bound_value(p.C_s + p.C_t, p.n, p.a_st, p.eps_st, p.K)
    return CkdVerdict(lhs <= rhs, lhs, rhs, rhs - lhs)
