from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

TERMS = ("rg", "td", "vd", "vc")


@dataclass
class MetricRecord:
    step: int
    lr: float
    loss: float
    rg: Optional[float] = None
    td: Optional[float] = None
    vd: Optional[float] = None
    vc: Optional[float] = None
    grad_norm: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class MetricsLog:
    """
    Curvas de pérdida de un paso. Los tiempos de pared van aparte
    para que metrics.jsonl sea reproducible bit a bit.
    """
    step_kind: str
    records: List[MetricRecord] = field(default_factory=list)
    timing: List[float] = field(default_factory=list)

    def append(self, record: MetricRecord, wall_time: float | None = None) -> None:
        self.records.append(record)
        if wall_time is not None:
            self.timing.append(float(wall_time))

    def __len__(self) -> int:
        return len(self.records)

    def curve(self, term: str = "loss") -> List[float]:
        return [getattr(r, term) for r in self.records if getattr(r, term) is not None]

    def summary(self) -> Dict[str, float]:
        if not self.records:
            return {"steps": 0}
        out: Dict[str, float] = {"steps": len(self.records), "loss_first": self.records[0].loss,
                                 "loss_last": self.records[-1].loss}
        for term in TERMS:
            c = self.curve(term)
            if c:
                out[f"{term}_last"] = c[-1]
        return out

    # ─────────────────────────────────────────────
    # Persistencia
    # ─────────────────────────────────────────────

    def metrics_lines(self) -> str:
        lines = []
        for r in self.records:
            d = {"step_kind": self.step_kind, **r.to_dict()}
            lines.append(json.dumps(d, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def write(self, directory: str | Path, append: bool = False) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        mode = "a" if append else "w"
        with open(directory / "metrics.jsonl", mode, encoding="utf-8") as f:
            f.write(self.metrics_lines())
        with open(directory / "timing.jsonl", mode, encoding="utf-8") as f:
            for r, t in zip(self.records, self.timing):
                f.write(json.dumps({"step_kind": self.step_kind, "step": r.step, "wall_s": t}) + "\n")
        return directory / "metrics.jsonl"

    @classmethod
    def read(cls, path: str | Path) -> List["MetricsLog"]:
        logs: Dict[str, MetricsLog] = {}
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                d = json.loads(line)
                kind = d.pop("step_kind")
                logs.setdefault(kind, cls(kind)).records.append(MetricRecord(**d))
        return list(logs.values())
