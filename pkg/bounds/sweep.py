from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from bounds.bound_math import ckd_wins
from bounds.params import BoundParams

log = logging.getLogger(__name__)

# Eje derivado: |F_t|_C = ratio_t_s · |F_s|_C
RATIO_AXIS = "ratio_t_s"


@dataclass
class SweepSpec:
    """
    Rejilla producto sobre ejes con nombre de BoundParams (más `ratio_t_s`).
    """
    base: BoundParams = field(default_factory=BoundParams)
    axes: Dict[str, List[float]] = field(default_factory=dict)
    enforce_assumptions: bool = True

    def validate(self) -> "SweepSpec":
        for name, values in self.axes.items():
            if not values:
                raise ValueError(f"Eje vacío: {name}")
            if name != RATIO_AXIS:
                self.base.with_values(**{name: values[0]})
        return self

    def size(self) -> int:
        total = 1
        for values in self.axes.values():
            total *= len(values)
        return total


@dataclass(frozen=True)
class SweepRecord:
    point: Dict[str, float]
    holds: bool
    lhs: float
    rhs: float
    margin: float
    violates_assumptions: bool = False


@dataclass
class SweepResult:
    """
    Un registro por punto de la rejilla. Con enforce_assumptions, los que
    violan los supuestos se marcan y quedan fuera del resumen.
    """
    axes: Tuple[str, ...]
    records: List[SweepRecord]
    enforce_assumptions: bool = True

    def counted(self) -> List[SweepRecord]:
        if not self.enforce_assumptions:
            return list(self.records)
        return [r for r in self.records if not r.violates_assumptions]

    @property
    def excluded(self) -> int:
        return len(self.records) - len(self.counted())


@dataclass(frozen=True)
class BoundaryPoint:
    fixed: Dict[str, float]
    status: str              # always | never | flips | mixed
    n_flip: Optional[float]  # menor n desde el que la desigualdad se mantiene


@dataclass
class SweepSummary:
    n_points: int
    holds_fraction: float
    boundary: List[BoundaryPoint]
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_excluded": self.n_excluded,
            "holds_fraction": self.holds_fraction,
            "boundary": [
                {"fixed": b.fixed, "status": b.status, "n_flip": b.n_flip} for b in self.boundary
            ],
        }


def point_params(base: BoundParams, point: Dict[str, float]) -> BoundParams:
    values = {k: v for k, v in point.items() if k != RATIO_AXIS}
    p = base.with_values(**values)
    if RATIO_AXIS in point:
        p = p.with_values(C_t=point[RATIO_AXIS] * p.C_s)
    return p


def regime_sweep(spec: SweepSpec) -> SweepResult:
    """
    Evalúa ckd_wins en cada punto de la rejilla. Los puntos que violan las
    ordenaciones de exponentes también se evalúan y quedan marcados.
    """
    spec.validate()
    axes = tuple(spec.axes)
    records: List[SweepRecord] = []

    for combo in itertools.product(*(spec.axes[a] for a in axes)):
        point = {a: float(v) for a, v in zip(axes, combo)}
        p = point_params(spec.base, point)
        p.validate()
        v = ckd_wins(p)
        records.append(SweepRecord(point, v.holds, v.lhs, v.rhs, v.margin, not p.assumptions_hold()))

    result = SweepResult(axes, records, spec.enforce_assumptions)
    log.info("Barrido: %d puntos, %d fuera de supuestos", len(records), result.excluded)
    return result


def _flip(ns_holds: Sequence[Tuple[float, bool]]) -> Tuple[str, Optional[float]]:
    ordered = sorted(ns_holds)
    flags = [h for _, h in ordered]
    if all(flags):
        return "always", ordered[0][0]
    if not any(flags):
        return "never", None
    # Menor n tal que se cumple para todo n' ≥ n.
    tail = len(flags)
    while tail > 0 and flags[tail - 1]:
        tail -= 1
    if tail == len(flags):
        return "mixed", None
    status = "flips" if not any(flags[:tail]) else "mixed"
    return status, ordered[tail][0]


def summarize(result: SweepResult) -> SweepSummary:
    counted = result.counted()
    n = len(counted)
    frac = sum(r.holds for r in counted) / n if n else 0.0

    boundary: List[BoundaryPoint] = []
    if "n" in result.axes:
        others = [a for a in result.axes if a != "n"]
        groups: Dict[tuple, List[Tuple[float, bool]]] = {}
        for r in counted:
            key = tuple(r.point[a] for a in others)
            groups.setdefault(key, []).append((r.point["n"], r.holds))
        for key, ns in groups.items():
            status, n_flip = _flip(ns)
            boundary.append(BoundaryPoint(dict(zip(others, key)), status, n_flip))

    return SweepSummary(n, frac, boundary, result.excluded)
