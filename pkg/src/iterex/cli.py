"""Command-line entry point: ``iterex <command> ...``.

Exit status is 0 on success, 2 for bad input or configuration, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .evaluation import (
    EvaluationError,
    group_by_sentence,
    pr_curve,
    read_gold,
    redundancy_metrics,
)
from .ingest import (
    IngestReport,
    build_random_bootstrap,
    order_for_bootstrap,
    pool_extractions,
    read_extractions,
    read_pools,
    read_sentences,
    write_extractions,
)
from .score_filter import ExternalScorer, ModelScorer, RankScorer, score_and_filter

log = logging.getLogger("iterex")

CONFIG_KEYS = {"seed", "model", "sources", "scorer", "max_input", "jobs"}
SCORERS = ("rank", "external", "model")


class UserError(Exception):
    """Bad arguments, configuration or input files (exit status 2)."""


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UserError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UserError(f"{p}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UserError(f"{p}: top level must be an object")
    errors = [f"{k}: unknown field" for k in sorted(set(cfg) - CONFIG_KEYS)]
    if "seed" in cfg and (isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], int)):
        errors.append(f"seed: expected an integer, got {cfg['seed']!r}")
    if "jobs" in cfg and (not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1):
        errors.append(f"jobs: expected a positive integer, got {cfg['jobs']!r}")
    if "scorer" in cfg and cfg["scorer"] not in SCORERS:
        errors.append(f"scorer: expected one of {', '.join(SCORERS)}, got {cfg['scorer']!r}")
    if "max_input" in cfg and (not isinstance(cfg["max_input"], int) or cfg["max_input"] < 2):
        errors.append(f"max_input: expected an integer >= 2, got {cfg['max_input']!r}")
    if "model" in cfg:
        try:
            _model_config(cfg["model"])
        except UserError as exc:
            errors.append(str(exc))
    for k, src in enumerate(cfg.get("sources", [])):
        if not isinstance(src, dict) or "name" not in src or "path" not in src:
            errors.append(f"sources[{k}]: expected an object with 'name' and 'path'")
            continue
        extra = set(src) - {"name", "path", "no_confidence"}
        if extra:
            errors.append(f"sources[{k}]: unknown fields {sorted(extra)}")
        if not Path(src["path"]).is_file():
            errors.append(f"sources[{k}].path: file not found: {src['path']}")
    if errors:
        raise UserError("invalid config " + str(p) + ":\n  " + "\n  ".join(errors))
    return cfg


def _model_config(d):
    from .neural import ModelConfig

    if not isinstance(d, dict):
        raise UserError("model: expected an object")
    try:
        return ModelConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UserError(f"model: {exc}") from None


def _need_file(path, what="input file") -> Path:
    p = Path(path)
    if not p.is_file():
        raise UserError(f"{what} not found: {p}")
    return p


def _setting(args, cfg, name, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


# ---------------------------------------------------------------- commands


def cmd_ingest(args, cfg) -> int:
    sources = [(s["name"], s["path"], bool(s.get("no_confidence"))) for s in cfg.get("sources", [])]
    for spec in args.source or []:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise UserError(f"--source expects NAME=PATH, got {spec!r}")
        sources.append((name, path, False))
    if not sources:
        raise UserError("no sources given (use --source NAME=PATH or 'sources' in the config)")
    names = [s[0] for s in sources]
    if len(set(names)) != len(names):
        raise UserError(f"duplicate source names: {names}")
    no_conf = set(args.no_confidence or []) | {n for n, _, nc in sources if nc}
    unknown = no_conf - set(names)
    if unknown:
        raise UserError(f"--no-confidence names unknown sources: {sorted(unknown)}")
    sentences = read_sentences(_need_file(args.sentences, "sentence file"))
    report = IngestReport()
    per_source = []
    for name, path, _ in sources:
        rows = read_extractions(_need_file(path, f"extraction file for source {name!r}"), name, report)
        if name in no_conf:
            rows = [(sid, e.with_(confidence=None)) for sid, e in rows]
        per_source.append((name, rows))
    for err in report.errors:
        log.warning("malformed line %s", err)
    if report.errors and args.strict:
        raise UserError(f"{len(report.errors)} malformed line(s); first: {report.errors[0]}")
    pools = pool_extractions(sentences, per_source, report)
    write_extractions(args.out, ((p.sentence.id, e) for p in pools for e in p.extractions),
                      with_source=True)
    for name in names:
        print(f"{name}\t{report.per_source[name]}")
    print(f"pooled\t{sum(len(p.extractions) for p in pools)}")
    print(f"duplicates\t{report.duplicates}")
    print(f"malformed\t{len(report.errors)}")
    if args.bootstrap_out:
        corpus = build_random_bootstrap(pools, args.seed, source_order=names, no_confidence=no_conf,
                                        report=report)
        write_extractions(args.bootstrap_out, ((s.id, e) for s, exts in corpus.pairs for e in exts),
                          with_source=True)
        print(f"bootstrap_sentences\t{len(corpus.pairs)}")
        print(f"skipped_sentences\t{len(report.skipped_sentences)}")
    return 0


def cmd_score_filter(args, cfg) -> int:
    scorer_name = args.scorer or cfg.get("scorer", "rank")
    pools = read_pools(_need_file(args.sentences, "sentence file"), _need_file(args.pooled, "pooled file"))
    if scorer_name == "rank":
        scorer = RankScorer(pools)
    elif scorer_name == "external":
        if not args.scores:
            raise UserError("--scores is required with --scorer external")
        scorer = ExternalScorer.from_file(_need_file(args.scores, "score file"))
    else:
        if not args.checkpoint:
            raise UserError("--checkpoint is required with --scorer model")
        scorer = ModelScorer(_load_model(args.checkpoint))
    result = score_and_filter(pools, scorer)
    for msg in result.warnings.messages:
        log.warning(msg)
    write_extractions(args.out, result.rows(), with_source=True)
    report = args.report or str(args.out) + ".report.tsv"
    with open(report, "w", encoding="utf-8") as fh:
        fh.write("sentence_id\tpool_size\tselected\tobjective\n")
        for res in result.sentences:
            fh.write(f"{res.sentence.id}\t{res.pool_size}\t{len(res.selected)}\t{res.objective!r}\n")
    pooled = sum(r.pool_size for r in result.sentences)
    kept = sum(len(r.selected) for r in result.sentences)
    print(f"sentences\t{len(result.sentences)}\npooled\t{pooled}\nselected\t{kept}")
    if result.errors:
        for e in result.errors:
            log.error(e)
        return 1
    return 0


def cmd_build_train(args, cfg) -> int:
    from .train_builder import build_corpus, write_instances

    sentences = read_sentences(_need_file(args.sentences, "sentence file"))
    report = IngestReport()
    rows = read_extractions(_need_file(args.extractions, "extraction file"), "train", report)
    if report.errors:
        raise UserError(f"{len(report.errors)} malformed line(s); first: {report.errors[0]}")
    grouped = group_by_sentence(rows)
    missing = sorted(set(grouped) - set(sentences))
    if missing:
        raise UserError(f"extractions reference unknown sentence ids: {missing[:5]}")
    pairs = []
    for sid, sent in sentences.items():
        exts = grouped.get(sid, [])
        has_conf = not args.file_order and all(e.confidence is not None for e in exts)
        pairs.append((sent, order_for_bootstrap(exts, has_confidence=has_conf)))
    max_input = _setting(args, cfg, "max_input", 300)
    instances = build_corpus(pairs, max_input=max_input,
                             shuffle_seed=args.seed if args.shuffle_train_order else None)
    write_instances(args.out, instances)
    print(f"sentences\t{len(pairs)}\ninstances\t{len(instances)}")
    return 0


def cmd_train(args, cfg) -> int:
    from .neural import ModelConfig, Seq2SeqExtractor
    from .train_builder import read_instances

    instances = read_instances(_need_file(args.instances, "instance file"))
    if not instances:
        raise UserError(f"{args.instances}: no training instances")
    mc = _model_config(cfg.get("model", {}))
    overrides = {k: getattr(args, k) for k in ("epochs", "lr") if getattr(args, k) is not None}
    overrides["seed"] = args.seed
    try:
        mc = ModelConfig.from_dict({**mc.to_dict(), **overrides})
    except ValueError as exc:
        raise UserError(str(exc)) from None
    model = Seq2SeqExtractor.from_instances(instances, mc)
    print(f"instances\t{len(instances)}\nvocab\t{len(model.vocab)}")
    t0 = time.perf_counter()

    def report(epoch, loss):
        print(f"epoch\t{epoch + 1}\t{loss:.6f}", flush=True)

    result = model.train(instances, callback=report)
    model.save(args.out)
    log.info("trained in %.1fs; initial loss %.4f", time.perf_counter() - t0, result.initial_loss)
    return 0


def _load_model(path):
    from .neural import Seq2SeqExtractor

    try:
        return Seq2SeqExtractor.load(_need_file(path, "checkpoint"))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UserError(f"cannot load checkpoint {path}: {exc}") from None


def cmd_decode(args, cfg) -> int:
    model = _load_model(args.checkpoint)
    sentences = list(read_sentences(_need_file(args.sentences, "sentence file")).values())
    jobs = _setting(args, cfg, "jobs", 1)

    def run(s):
        return model.generate_extractions(s, max_iters=args.max_iters, max_len=args.max_len)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, sentences))
    else:
        results = [run(s) for s in sentences]
    write_extractions(args.out, ((s.id, e) for s, r in zip(sentences, results) for e in r.extractions))
    print(f"sentences\t{len(sentences)}")
    print(f"extractions\t{sum(len(r.extractions) for r in results)}")
    print(f"malformed\t{sum(r.malformed for r in results)}")
    print(f"hit_iteration_cap\t{sum(r.stopped_by == 'max_iters' for r in results)}")
    return 0


def _read_preds(path):
    report = IngestReport()
    rows = read_extractions(_need_file(path, "prediction file"), "model", report)
    if report.errors:
        raise UserError(f"{len(report.errors)} malformed prediction line(s); first: {report.errors[0]}")
    return group_by_sentence(rows)


def _write_curve(curve, csv_path, svg_path):
    if csv_path:
        Path(csv_path).write_text(curve.to_csv(), encoding="utf-8")
    if svg_path:
        Path(svg_path).write_text(curve.to_svg(), encoding="utf-8")


def cmd_eval(args, cfg) -> int:
    preds = _read_preds(args.pred)
    golds = read_gold(_need_file(args.gold, "gold file"))
    curve = pr_curve(preds, golds)
    print(f"optimal_f1\t{curve.optimal_f1:.6f}\nauc\t{curve.auc:.6f}\nlast_f1\t{curve.last_f1:.6f}")
    _write_curve(curve, args.curve_csv, args.curve_svg)
    return 0


def cmd_pr_curve(args, cfg) -> int:
    curve = pr_curve(_read_preds(args.pred), read_gold(_need_file(args.gold, "gold file")))
    _write_curve(curve, args.out, args.svg)
    if not args.out:
        sys.stdout.write(curve.to_csv())
    return 0


def cmd_redundancy(args, cfg) -> int:
    stats = redundancy_metrics(_read_preds(args.pred))
    print(f"tuples\t{stats.tuples}\nmno\t{stats.mno:.6f}\niou\t{stats.iou:.6f}")
    return 0


def cmd_export_attention(args, cfg) -> int:
    model = _load_model(args.checkpoint)
    sentences = read_sentences(_need_file(args.sentences, "sentence file"))
    if args.sentence_id not in sentences:
        raise UserError(f"unknown sentence id {args.sentence_id!r}")
    sent = sentences[args.sentence_id]
    res = model.generate_extractions(sent, max_iters=args.max_iters)
    if not 1 <= args.iteration <= len(res.iterations):
        raise UserError(f"iteration {args.iteration} out of range 1..{len(res.iterations)}")
    it = res.iterations[args.iteration - 1]
    model.export_attention(args.out, it.input_tokens, it.emitted)
    print(f"input_tokens\t{len(it.input_tokens)}\ndecoded_tokens\t{len(it.emitted)}")
    return 0


# ---------------------------------------------------------------- parser


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting earlier values
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=dflt(None), help="JSON configuration file")
    g.add_argument("--seed", type=int, default=dflt(None), help="random seed (default 0)")
    g.add_argument("--jobs", type=int, default=dflt(None), help="worker threads for decoding")
    g.add_argument("-v", "--verbose", action="count", default=dflt(0))
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    ap = argparse.ArgumentParser(prog="iterex", parents=[_global_flags(suppress=False)],
                                 description="Iterative open IE pipeline: pooling, aggregation, "
                                             "training, decoding and scoring.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help):
        p = sub.add_parser(name, help=help, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "pool extractor outputs per sentence")
    p.add_argument("--sentences", required=True)
    p.add_argument("--source", action="append", metavar="NAME=PATH",
                   help="extractor output; repeat in rank order")
    p.add_argument("--no-confidence", action="append", metavar="NAME",
                   help="ignore this source's confidences and keep file order")
    p.add_argument("--out", required=True, help="pooled extraction TSV")
    p.add_argument("--bootstrap-out", help="also write the random-bootstrap training set")
    p.add_argument("--strict", action="store_true", help="fail on malformed lines")

    p = add("score-filter", cmd_score_filter, "select a non-redundant subset per sentence")
    p.add_argument("--sentences", required=True)
    p.add_argument("--pooled", required=True)
    p.add_argument("--scorer", choices=SCORERS)
    p.add_argument("--scores", help="score TSV for --scorer external")
    p.add_argument("--checkpoint", help="model for --scorer model")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="objective report (default OUT.report.tsv)")

    p = add("build-train", cmd_build_train, "turn extractions into training instances")
    p.add_argument("--sentences", required=True)
    p.add_argument("--extractions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-input", dest="max_input", type=int)
    p.add_argument("--file-order", action="store_true", help="keep file order instead of confidence")
    p.add_argument("--shuffle-train-order", action="store_true",
                   help="randomize each sentence's extraction order (seeded)")

    p = add("train", cmd_train, "train the seq2seq extractor")
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)

    p = add("decode", cmd_decode, "extract tuples with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--max-len", type=int)

    p = add("eval", cmd_eval, "score predictions against gold tuples")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--curve-csv")
    p.add_argument("--curve-svg")

    p = add("pr-curve", cmd_pr_curve, "write the precision-recall curve")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--svg")

    p = add("redundancy", cmd_redundancy, "MNO and IOU of a prediction file")
    p.add_argument("--pred", required=True)

    p = add("export-attention", cmd_export_attention, "dump one iteration's attention matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--sentence-id", required=True)
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        args.seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if args.jobs is not None and args.jobs < 1:
            raise UserError("--jobs must be positive")
        return args.func(args, cfg)
    except (UserError, EvaluationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # malformed input detected by a reader
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
