from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import InconsistentSplitsError


@dataclass
class ResultRow:
    method: str
    strategy: str
    seed: int
    scores: Dict[str, float]

    def average(self, splits: Sequence[str]) -> float:
        return float(np.mean([self.scores[s] for s in splits]))


@dataclass
class AggregateRow:
    method: str
    strategy: str
    n_seeds: int
    mean: Dict[str, float]
    stdev: Dict[str, float]
    avg_mean: float
    avg_stdev: float


@dataclass
class ResultTable:
    """
    Filas por semilla y, tras aggregate(), filas media ± desviación.
    La columna Avg es la media aritmética de los splits.
    """
    splits: Tuple[str, ...]
    rows: List[ResultRow] = field(default_factory=list)
    aggregates: List[AggregateRow] = field(default_factory=list)
    # (primero, segundo): la fila delta es segundo − primero.
    delta_pair: Optional[Tuple[str, str]] = None

    def add(self, row: ResultRow) -> None:
        missing = set(self.splits) - set(row.scores)
        if missing:
            raise InconsistentSplitsError(f"Fila {row.method}/{row.seed} sin splits {sorted(missing)}")
        self.rows.append(row)

    def keys(self) -> List[Tuple[str, str]]:
        seen: List[Tuple[str, str]] = []
        for r in self.rows:
            if (r.method, r.strategy) not in seen:
                seen.append((r.method, r.strategy))
        return seen

    def find(self, method: str) -> Optional[AggregateRow]:
        return next((a for a in self.aggregates if a.method == method), None)

    def averages(self, method: str) -> List[float]:
        return [r.average(self.splits) for r in self.rows if r.method == method]

    def compare(self, first: str, second: str) -> None:
        """
        Fija la pareja de la fila delta (second − first).
        """
        for method in (first, second):
            if self.find(method) is None:
                raise KeyError(f"Método sin agregado: {method}")
        self.delta_pair = (first, second)

    def delta_methods(self) -> Optional[Tuple[str, str]]:
        """
        Pareja fijada con compare(); si no la hay y sólo existen dos agregados,
        esos dos en orden.
        """
        if self.delta_pair is not None:
            return self.delta_pair
        if len(self.aggregates) == 2:
            return self.aggregates[0].method, self.aggregates[1].method
        return None

    def delta(self, first: Optional[str] = None, second: Optional[str] = None) -> Optional[Dict[str, float]]:
        """
        Diferencia second − first por split y en Avg, sobre las medias agregadas.
        Sin argumentos usa delta_methods().
        """
        if first is None or second is None:
            pair = self.delta_methods()
            if pair is None:
                return None
            first, second = pair
        a, b = self.find(first), self.find(second)
        if a is None or b is None:
            raise KeyError(f"Método sin agregado: {first if a is None else second}")
        out = {s: b.mean[s] - a.mean[s] for s in self.splits}
        out["avg"] = b.avg_mean - a.avg_mean
        return out


def _std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def aggregate(tables: Sequence[ResultTable]) -> ResultTable:
    """
    Une las tablas por semilla y añade media y desviación muestral por celda.
    La pareja delta de la primera tabla, si la hay, se conserva.
    """
    if not tables:
        raise ValueError("Se necesita al menos una tabla")
    splits = tables[0].splits
    for t in tables[1:]:
        if tuple(t.splits) != tuple(splits):
            raise InconsistentSplitsError(f"Splits distintos: {list(splits)} vs {list(t.splits)}")

    merged = ResultTable(tuple(splits))
    for t in tables:
        for r in t.rows:
            merged.add(r)
    merged.rows.sort(key=lambda r: (r.seed,))

    for method, strategy in merged.keys():
        group = [r for r in merged.rows if r.method == method and r.strategy == strategy]
        avgs = [r.average(splits) for r in group]
        merged.aggregates.append(AggregateRow(
            method=method,
            strategy=strategy,
            n_seeds=len(group),
            mean={s: float(np.mean([r.scores[s] for r in group])) for s in splits},
            stdev={s: _std([r.scores[s] for r in group]) for s in splits},
            avg_mean=float(np.mean(avgs)),
            avg_stdev=_std(avgs),
        ))
    if tables[0].delta_pair is not None:
        merged.compare(*tables[0].delta_pair)
    return merged
