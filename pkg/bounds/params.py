from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import List, Optional

from utils.errors import BoundDomainError

EXPONENTS = ("a_s", "a_a", "a_t", "a_sa", "a_st", "a_sbar", "a_sbart")
EPSILONS = ("eps_s", "eps_a", "eps_t", "eps_sa", "eps_st", "eps_sbar", "eps_sbart")
CAPACITIES = ("C_s", "C_a", "C_t", "C_sbar")


@dataclass(frozen=True)
class BoundParams:
    """
    Capacidades |F|_C, tamaño muestral n, exponentes a ∈ [0.5, 1],
    errores de aproximación ε ≥ 0 y constante K del O(·).

    sbar = alumno destilado; C_sbar=None significa C_sbar = C_s.
    """
    C_s: float = 1.0
    C_a: float = 2.0
    C_t: float = 4.0
    C_sbar: Optional[float] = None
    n: float = 1e6
    a_s: float = 0.5
    a_a: float = 0.6
    a_t: float = 0.7
    a_sa: float = 0.55
    a_st: float = 0.5
    a_sbar: float = 0.6
    a_sbart: float = 0.6
    eps_s: float = 0.01
    eps_a: float = 0.01
    eps_t: float = 0.01
    eps_sa: float = 0.01
    eps_st: float = 0.01
    eps_sbar: float = 0.01
    eps_sbart: float = 0.01
    K: float = 1.0

    @property
    def c_sbar(self) -> float:
        return self.C_s if self.C_sbar is None else self.C_sbar

    def domain_violations(self) -> List[str]:
        v: List[str] = []
        if self.n < 1:
            v.append(f"n ≥ 1 (n={self.n})")
        if self.K <= 0:
            v.append(f"K > 0 (K={self.K})")
        for name in CAPACITIES:
            c = self.c_sbar if name == "C_sbar" else getattr(self, name)
            if c <= 0:
                v.append(f"{name} > 0 ({c})")
        for name in EXPONENTS:
            a = getattr(self, name)
            if not 0.5 <= a <= 1.0:
                v.append(f"{name} ∈ [0.5, 1] ({a})")
        for name in EPSILONS:
            if getattr(self, name) < 0:
                v.append(f"{name} ≥ 0 ({getattr(self, name)})")
        return v

    def assumption_violations(self) -> List[str]:
        """
        Ordenaciones de tasas de aprendizaje que la argumentación asume.
        """
        checks = (
            ("a_s ≤ a_t", self.a_s <= self.a_t),
            ("a_sa ≤ a_a", self.a_sa <= self.a_a),
            ("a_sbart ≤ a_t", self.a_sbart <= self.a_t),
            ("a_s ≤ a_sbar", self.a_s <= self.a_sbar),
            ("a_st ≤ a_sbart", self.a_st <= self.a_sbart),
        )
        return [name for name, ok in checks if not ok]

    def assumptions_hold(self) -> bool:
        return not self.assumption_violations()

    def validate(self, enforce_assumptions: bool = False) -> "BoundParams":
        v = self.domain_violations()
        if enforce_assumptions:
            v += self.assumption_violations()
        if v:
            raise BoundDomainError("Parámetros fuera de dominio: " + "; ".join(v))
        return self

    def with_values(self, **values) -> "BoundParams":
        known = {f.name for f in fields(self)}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"Parámetros de cota desconocidos: {sorted(unknown)}")
        return replace(self, **values)

    def to_dict(self) -> dict:
        return asdict(self)
