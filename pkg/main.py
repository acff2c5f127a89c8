import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from utils.errors import ConfigError, LabError
from utils.log import setup_logging

log = logging.getLogger("ckdlab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

FORMATS = ("csv", "json", "markdown")


def excepthook(exc_type, exc_value, exc_tb):
    msg = "".join(traceback.format_exception(exc_type, exc_value, exc_tb))
    log.critical("Error crítico\n%s", msg)


def default_out() -> Path:
    return Path(os.environ.get("CKDLAB_OUT", "runs"))


def _out(args) -> Path:
    return Path(args.out) if args.out else default_out()


def _emit(table, out: Path, fmt: str, stem: str = "report") -> Path:
    from evalharness.report import emit_report, report_path

    path = emit_report(table, report_path(out, fmt, stem), fmt)
    log.info("Informe: %s", path)
    return path


# ─────────────────────────────────────────────
# Subcomandos
# ─────────────────────────────────────────────

def cmd_pretrain(args) -> int:
    from cascade.experiment import pretrain_tiers
    from data.corpus import build_corpus
    from data.corpus_storage import JsonlCorpusStorage
    from settings.storage import JsonConfigStorage, to_dict
    from utils.manifest import RunManifest

    exp = JsonConfigStorage(args.config).load_experiment()
    out = _out(args)
    manifest = RunManifest.start("pretrain", to_dict(exp), args.seed)

    corpus = build_corpus(exp.corpus)
    JsonlCorpusStorage(out / "corpus.jsonl").save(corpus)
    manifest.add_output(out / "corpus.jsonl")

    tiers = pretrain_tiers(exp, corpus, args.seed, progress=log.info)
    for tier, art in tiers.items():
        tier_dir = out / "tiers"
        manifest.add_output(art.encoder.save(tier_dir / f"{tier}.encoder.ckpt"))
        manifest.add_output(art.checkpoint.save(tier_dir / f"{tier}.ckpt"))
        for kind, m in art.trained.metrics.items():
            m.write(tier_dir / tier, append=kind != "PT")
        log.info("%s: %d parámetros, %s", tier, art.checkpoint.parameter_count(),
                 " → ".join(art.checkpoint.provenance))

    manifest.finish().write(out)
    return EXIT_OK


def _run_plan_file(args, force_strategy=None) -> int:
    from cascade.runner import run_plan, write_cascade_result
    from data.corpus import build_corpus
    from evalharness.evaluate import evaluate_all
    from evalharness.results import ResultRow, ResultTable
    from model.tiny_vlm import TinyVlm
    from settings.storage import JsonConfigStorage, to_dict
    from utils.manifest import RunManifest, file_hash

    pf = JsonConfigStorage(args.config).load_plan()
    if force_strategy is not None:
        pf.strategy = force_strategy

    missing = [p for p in pf.input_paths() if not p.exists()]
    if missing:
        raise LabError(f"Checkpoint inexistente: {missing[0]}")

    inputs = {str(p): file_hash(p) for p in pf.input_paths()}
    manifest = RunManifest.start(args.command, to_dict(pf), args.seed, inputs)
    out = _out(args)

    plan = pf.to_plan(args.seed)
    corpus = build_corpus(pf.experiment.corpus)
    result = run_plan(plan, corpus)

    target = out / plan.strategy.value
    write_cascade_result(result, target)
    manifest.add_output(target)

    scores = evaluate_all(TinyVlm.from_checkpoint(result.final), corpus, pf.experiment.eval_splits)
    table = ResultTable(tuple(pf.experiment.eval_splits))
    table.add(ResultRow(plan.strategy.value, plan.strategy.value, args.seed, scores))
    manifest.add_output(_emit(table, out, args.format))

    manifest.finish().write(out)
    return EXIT_OK


def cmd_distill(args) -> int:
    return _run_plan_file(args, force_strategy="single_teacher")


def cmd_cascade(args) -> int:
    return _run_plan_file(args)


def cmd_ablate(args) -> int:
    from cascade.experiment import check_ordering, compare_strategies
    from settings.storage import JsonConfigStorage, to_dict
    from utils.manifest import RunManifest

    exp = JsonConfigStorage(args.config).load_experiment()
    n = args.seeds or exp.seeds
    seeds = list(range(args.seed, args.seed + n))
    out = _out(args)
    manifest = RunManifest.start("ablate", to_dict(exp), args.seed)

    table = compare_strategies(exp, seeds, jobs=args.jobs, out_dir=out, progress=log.info)
    manifest.add_output(_emit(table, out, args.format))
    pair = table.delta_methods()
    if pair is not None:
        log.info("Δ %s - %s: Avg %+.4f", pair[1], pair[0], table.delta(*pair)["avg"])

    verdicts = []
    pairs = [("ckd-bottom-up", "kd"), ("ckd-bottom-up", "ckd-top-down"), ("kd", "tinyllava-student")]
    for better, worse in pairs:
        if table.find(better) and table.find(worse):
            v = check_ordering(table, better, worse)
            verdicts.append(v)
            log.info("Orden: %s", v.message)
    if table.find("tinyllava-teacher") and table.find("tinyllava-student") and "relational" in table.splits:
        v = check_ordering(table, "tinyllava-teacher", "tinyllava-student", split="relational")
        verdicts.append(v)
        log.info("Separación de capacidad (relational): %s", v.message)

    with open(out / "orderings.json", "w", encoding="utf-8") as f:
        json.dump([v.__dict__ for v in verdicts], f, indent=2, sort_keys=True)
    manifest.add_output(out / "orderings.json")

    manifest.finish().write(out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    from bounds.sweep import regime_sweep, summarize
    from evalharness.report import emit_sweep_report, report_path
    from settings.storage import JsonConfigStorage, to_dict
    from utils.manifest import RunManifest

    spec = JsonConfigStorage(args.config).load_sweep()
    out = _out(args)
    manifest = RunManifest.start("bounds", to_dict(spec), None)

    result = regime_sweep(spec)
    summary = summarize(result)
    path = emit_sweep_report(result, summary, report_path(out, args.format, "sweep"), args.format)
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)

    flips = [b for b in summary.boundary if b.status == "flips"]
    log.info("CKD gana en %.4f de %d puntos; %d fronteras de cambio", summary.holds_fraction,
             summary.n_points, len(flips))
    manifest.add_output(path)
    manifest.add_output(out / "summary.json")
    manifest.finish().write(out)
    return EXIT_OK


def cmd_eval(args) -> int:
    from data.corpus import build_corpus
    from evalharness.evaluate import evaluate_all
    from evalharness.results import ResultRow, ResultTable
    from model.checkpoint import Checkpoint
    from model.tiny_vlm import TinyVlm
    from settings.storage import JsonConfigStorage, to_dict
    from utils.manifest import RunManifest, file_hash

    exp = JsonConfigStorage(args.config).load_experiment()
    out = _out(args)
    inputs = {c: file_hash(c) for c in args.checkpoints if Path(c).exists()}
    manifest = RunManifest.start("eval", to_dict(exp), args.seed, inputs)

    corpus = build_corpus(exp.corpus)
    table = ResultTable(tuple(exp.eval_splits))
    for path in args.checkpoints:
        ckpt = Checkpoint.load(path)
        scores = evaluate_all(TinyVlm.from_checkpoint(ckpt), corpus, exp.eval_splits)
        table.add(ResultRow(Path(path).stem, ckpt.tag or "-", args.seed, scores))

    manifest.add_output(_emit(table, out, args.format, stem="eval"))
    manifest.finish().write(out)
    return EXIT_OK


def cmd_report(args) -> int:
    from evalharness.report import parse_csv_report

    if not Path(args.input).exists():
        raise ConfigError("input", f"no existe {args.input}")
    table = parse_csv_report(args.input)
    _emit(table, _out(args), args.format)
    return EXIT_OK


# ─────────────────────────────────────────────
# Parser
# ─────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ckdlab", description="Laboratorio de destilación en cascada")
    p.add_argument("--log-level", default="INFO")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=FORMATS, default="csv")

    sp = sub.add_parser("pretrain", help="preentrena encoder + TinyLLaVA por tier")
    common(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("distill", help="destilación con un solo profesor")
    common(sp)
    sp.set_defaults(func=cmd_distill)

    sp = sub.add_parser("cascade", help="ejecuta un plan de cascada")
    common(sp)
    sp.set_defaults(func=cmd_cascade)

    sp = sub.add_parser("ablate", help="compara estrategias sobre varias semillas")
    common(sp)
    sp.add_argument("--seeds", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("bounds", help="barrido de regímenes de las cotas")
    common(sp)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("eval", help="evalúa checkpoints en los splits retenidos")
    common(sp)
    sp.add_argument("checkpoints", nargs="+")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("report", help="reemite un informe CSV en otro formato")
    common(sp, config_required=False)
    sp.add_argument("input")
    sp.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    sys.excepthook = excepthook
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        return args.func(args)
    except ConfigError as e:
        log.error("Error de configuración: %s", e)
        return EXIT_CONFIG
    except LabError as e:
        log.error("%s", e)
        return EXIT_RUNTIME
    except Exception:
        excepthook(*sys.exc_info())
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
