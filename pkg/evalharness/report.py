"""
Serialización de tablas de resultados y de barridos de cotas.

CSV (columnas):
  kind      row | mean | delta
  method, strategy   en la fila delta: "segundo - primero"
  seed      sólo en filas `row`
  n_seeds   sólo en filas `mean`
  <split>…  exactitud en [0, 1]
  avg       media aritmética de los splits
  <split>_std…, avg_std   sólo en filas `mean`

Los floats se escriben con repr() (texto más corto que vuelve al mismo valor).
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Dict, List, Optional

from evalharness.results import AggregateRow, ResultRow, ResultTable
from utils.errors import ReportError

FORMATS = ("csv", "json", "markdown")
DELTA_SEP = " - "

# Avg de referencia de la ablación top-down / bottom-up.
REFERENCE_AVG = {"top_down": 61.0, "bottom_up": 61.8}


def _f(x: float) -> str:
    return repr(float(x))


def _header(splits) -> List[str]:
    return (["kind", "method", "strategy", "seed", "n_seeds", *splits, "avg"]
            + [f"{s}_std" for s in splits] + ["avg_std"])


def reference_note(table: ResultTable) -> Optional[Dict[str, float]]:
    strategies = {a.strategy for a in table.aggregates}
    if set(REFERENCE_AVG) <= strategies:
        return dict(REFERENCE_AVG)
    return None


# ─────────────────────────────────────────────
# Renderizadores
# ─────────────────────────────────────────────

def render_csv(table: ResultTable) -> str:
    splits = list(table.splits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(splits))
    blank = [""] * (len(splits) + 1)

    for r in table.rows:
        w.writerow(["row", r.method, r.strategy, r.seed, "",
                    *[_f(r.scores[s]) for s in splits], _f(r.average(splits)), *blank])
    for a in table.aggregates:
        w.writerow(["mean", a.method, a.strategy, "", a.n_seeds,
                    *[_f(a.mean[s]) for s in splits], _f(a.avg_mean),
                    *[_f(a.stdev[s]) for s in splits], _f(a.avg_stdev)])
    pair = table.delta_methods()
    if pair is not None:
        d = table.delta(*pair)
        first, second = table.find(pair[0]), table.find(pair[1])
        w.writerow(["delta", f"{second.method}{DELTA_SEP}{first.method}",
                    f"{second.strategy}{DELTA_SEP}{first.strategy}", "", "",
                    *[_f(d[s]) for s in splits], _f(d["avg"]), *blank])
    return buf.getvalue()


def render_json(table: ResultTable) -> str:
    splits = list(table.splits)
    pair = table.delta_methods()
    doc = {
        "splits": splits,
        "rows": [
            {"method": r.method, "strategy": r.strategy, "seed": r.seed,
             "scores": {s: r.scores[s] for s in splits}, "avg": r.average(splits)}
            for r in table.rows
        ],
        "aggregates": [
            {"method": a.method, "strategy": a.strategy, "n_seeds": a.n_seeds,
             "mean": a.mean, "stdev": a.stdev, "avg_mean": a.avg_mean, "avg_stdev": a.avg_stdev}
            for a in table.aggregates
        ],
        "delta": table.delta(),
        "delta_pair": None if pair is None else {"first": pair[0], "second": pair[1]},
        "reference_avg": reference_note(table),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def render_markdown(table: ResultTable) -> str:
    """
    Tabla en porcentaje con dos decimales y, al final, las filas por semilla
    con los valores exactos (repr) para que el informe no pierda información.
    """
    splits = list(table.splits)
    lines = [
        "| Method | Strategy | " + " | ".join(splits) + " | Avg |",
        "|---|---|" + "---:|" * (len(splits) + 1),
    ]
    if table.aggregates:
        for a in table.aggregates:
            cells = [f"{_pct(a.mean[s])} ± {_pct(a.stdev[s])}" for s in splits]
            cells.append(f"{_pct(a.avg_mean)} ± {_pct(a.avg_stdev)}")
            lines.append(f"| {a.method} | {a.strategy} | " + " | ".join(cells) + " |")
        pair = table.delta_methods()
        if pair is not None:
            d = table.delta(*pair)
            cells = [f"{100.0 * d[s]:+.2f}" for s in splits] + [f"{100.0 * d['avg']:+.2f}"]
            lines.append(f"| Δ {pair[1]}{DELTA_SEP}{pair[0]} | | " + " | ".join(cells) + " |")
    else:
        for r in table.rows:
            cells = [_pct(r.scores[s]) for s in splits] + [_pct(r.average(splits))]
            lines.append(f"| {r.method} (seed {r.seed}) | {r.strategy} | " + " | ".join(cells) + " |")

    ref = reference_note(table)
    if ref is not None:
        lines.append("")
        lines.append(f"> Avg de referencia: top-down {ref['top_down']}, bottom-up {ref['bottom_up']}")

    if table.rows:
        lines += [
            "",
            "Valores exactos por semilla:",
            "",
            "| Method | Strategy | Seed | " + " | ".join(splits) + " | Avg |",
            "|---|---|---:|" + "---:|" * (len(splits) + 1),
        ]
        for r in table.rows:
            cells = [_f(r.scores[s]) for s in splits] + [_f(r.average(splits))]
            lines.append(f"| {r.method} | {r.strategy} | {r.seed} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


_RENDERERS = {"csv": render_csv, "json": render_json, "markdown": render_markdown}
_SUFFIX = {"csv": ".csv", "json": ".json", "markdown": ".md"}


def _write(text: str, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise ReportError(f"No se puede escribir el informe en {path}: {e}") from e
    return path


def emit_report(table: ResultTable, path: str | Path, fmt: str = "csv") -> Path:
    if fmt not in _RENDERERS:
        raise ValueError(f"Formato desconocido: {fmt} (usa {', '.join(FORMATS)})")
    return _write(_RENDERERS[fmt](table), path)


def report_path(directory: str | Path, fmt: str, stem: str = "report") -> Path:
    return Path(directory) / f"{stem}{_SUFFIX[fmt]}"


# ─────────────────────────────────────────────
# Lectura CSV
# ─────────────────────────────────────────────

def parse_csv_report(path: str | Path) -> ResultTable:
    """
    Reconstruye la tabla desde un CSV de emit_report. De la fila delta sólo se
    recupera la pareja; los valores se recalculan.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        i_avg = header.index("avg")
        splits = tuple(header[5:i_avg])
        table = ResultTable(splits)
        n = len(splits)

        for rec in reader:
            if not rec:
                continue
            kind, method, strategy = rec[0], rec[1], rec[2]
            values = rec[5:5 + n]
            if kind == "row":
                table.add(ResultRow(method, strategy, int(rec[3]),
                                    {s: float(v) for s, v in zip(splits, values)}))
            elif kind == "mean":
                stds = rec[i_avg + 1:i_avg + 1 + n]
                table.aggregates.append(AggregateRow(
                    method=method,
                    strategy=strategy,
                    n_seeds=int(rec[4]),
                    mean={s: float(v) for s, v in zip(splits, values)},
                    stdev={s: float(v) for s, v in zip(splits, stds)},
                    avg_mean=float(rec[i_avg]),
                    avg_stdev=float(rec[i_avg + 1 + n]),
                ))
            elif kind == "delta":
                second, _, first = method.partition(DELTA_SEP)
                table.compare(first, second)
    return table


# ─────────────────────────────────────────────
# Barridos de cotas
# ─────────────────────────────────────────────

def render_sweep_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    axes = list(result.axes)
    w.writerow([*axes, "holds", "lhs", "rhs", "margin", "violates_assumptions"])
    for r in result.records:
        w.writerow([*[_f(r.point[a]) for a in axes], int(r.holds), _f(r.lhs), _f(r.rhs), _f(r.margin),
                    int(r.violates_assumptions)])
    return buf.getvalue()


def render_sweep_json(result, summary) -> str:
    doc = {
        "axes": list(result.axes),
        "records": [
            {"point": r.point, "holds": r.holds, "lhs": r.lhs, "rhs": r.rhs, "margin": r.margin,
             "violates_assumptions": r.violates_assumptions}
            for r in result.records
        ],
        "enforce_assumptions": result.enforce_assumptions,
        "summary": summary.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_sweep_markdown(result, summary) -> str:
    lines = [
        f"Puntos de la rejilla: {len(result.records)} (fuera de supuestos, sin contar: {summary.n_excluded})",
        f"Fracción en la que CKD gana: {summary.holds_fraction:.4f}",
        "",
    ]
    fixed_axes = [a for a in result.axes if a != "n"]
    if summary.boundary:
        lines.append("| " + " | ".join(fixed_axes + ["estado", "n de cambio"]) + " |")
        lines.append("|" + "---|" * (len(fixed_axes) + 2))
        for b in summary.boundary:
            cells = [f"{b.fixed[a]:g}" for a in fixed_axes]
            cells += [b.status, "" if b.n_flip is None else f"{b.n_flip:g}"]
            lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_sweep_report(result, summary, path: str | Path, fmt: str = "csv") -> Path:
    if fmt == "csv":
        text = render_sweep_csv(result)
    elif fmt == "json":
        text = render_sweep_json(result, summary)
    elif fmt == "markdown":
        text = render_sweep_markdown(result, summary)
    else:
        raise ValueError(f"Formato desconocido: {fmt} (usa {', '.join(FORMATS)})")
    return _write(text, path)
