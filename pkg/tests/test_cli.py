import json
import time

import numpy as np
import pytest

from iterex.cli import main
from iterex.evaluation import group_by_sentence
from iterex.ingest import read_extractions, read_pools
from iterex.score_filter import RankScorer, rouge2, subset_objective
from iterex.synthetic import SOURCES, bundled

SENTS = str(bundled("toy_sentences.tsv"))
GOLD = str(bundled("toy_gold.tsv"))


def source_args():
    out = []
    for s in SOURCES:
        out += ["--source", f"{s}={bundled(f'toy_{s}.tsv')}"]
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    return dict(line.split("\t", 1) for line in out.strip().splitlines())


@pytest.fixture
def pooled(tmp_path, capsys):
    code, out, _ = run(capsys, "ingest", "--sentences", SENTS, *source_args(),
                       "--out", tmp_path / "pooled.tsv", "--bootstrap-out", tmp_path / "boot.tsv")
    assert code == 0
    return tmp_path / "pooled.tsv", kv(out)


def test_ingest_counts_and_bootstrap(pooled, tmp_path):
    path, stats = pooled
    assert {s: int(stats[s]) for s in SOURCES} == {"clean": 123, "clause": 246, "noisy": 92}
    assert int(stats["pooled"]) + int(stats["duplicates"]) == 123 + 246 + 92
    rows = read_extractions(tmp_path / "boot.tsv")
    for sid, exts in group_by_sentence(rows).items():
        assert len({e.source for e in exts}) == 1


def test_ingest_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "ingest", "--sentences", SENTS, "--source",
                       f"a={tmp_path / 'missing.tsv'}", "--out", tmp_path / "o.tsv")
    assert code == 2 and "missing.tsv" in err


def test_ingest_no_confidence_keeps_file_order(tmp_path, capsys):
    src = tmp_path / "a.tsv"
    src.write_text("s0002\t0.1\tx\tfirst\t\ns0002\t0.9\tx\tsecond\t\n")
    args = ["ingest", "--sentences", SENTS, "--source", f"a={src}", "--bootstrap-out", tmp_path / "b.tsv"]
    assert run(capsys, *args, "--out", tmp_path / "p.tsv")[0] == 0
    rels = [e.rel for sid, e in read_extractions(tmp_path / "b.tsv") if sid == "s0002"]
    assert rels == [("second",), ("first",)]
    assert run(capsys, *args, "--no-confidence", "a", "--out", tmp_path / "p.tsv")[0] == 0
    rels = [e.rel for sid, e in read_extractions(tmp_path / "b.tsv") if sid == "s0002"]
    assert rels == [("first",), ("second",)]


def test_ingest_strict_malformed(tmp_path, capsys):
    src = tmp_path / "a.tsv"
    src.write_text("s0001\t0.5\tfrank\n")
    base = ["ingest", "--sentences", SENTS, "--source", f"a={src}", "--out", tmp_path / "p.tsv"]
    code, out, _ = run(capsys, *base)
    assert code == 0 and kv(out)["malformed"] == "1"
    assert run(capsys, *base, "--strict")[0] == 2


def test_score_filter_report_matches_objective(pooled, tmp_path, capsys):
    path, _ = pooled
    outs = []
    for k in range(2):
        out = tmp_path / f"agg{k}.tsv"
        assert run(capsys, "score-filter", "--sentences", SENTS, "--pooled", path, "--scorer", "rank",
                   "--out", out)[0] == 0
        outs.append(out.read_bytes() + (tmp_path / f"agg{k}.tsv.report.tsv").read_bytes())
    assert outs[0] == outs[1]
    pools = {p.sentence.id: p for p in read_pools(SENTS, path)}
    scorer = RankScorer(list(pools.values()))
    selected = group_by_sentence(read_extractions(tmp_path / "agg0.tsv"))
    lines = (tmp_path / "agg0.tsv.report.tsv").read_text().splitlines()[1:]
    assert len(lines) == len(pools)
    for line in lines:
        sid, size, n, obj = line.split("\t")
        pool = pools[sid]
        sel = selected.get(sid, [])
        assert int(size) == len(pool.extractions) and int(n) == len(sel)
        f = [scorer.score(pool.sentence, e) for e in sel]
        R = np.array([[0.0 if a is b else rouge2(a.words(), b.words()) for b in sel] for a in sel])
        assert float(obj) == pytest.approx(subset_objective(f, R, range(len(sel))), abs=1e-12)


def test_score_filter_model_needs_checkpoint(pooled, tmp_path, capsys):
    code, _, err = run(capsys, "score-filter", "--sentences", SENTS, "--pooled", pooled[0],
                       "--scorer", "model", "--out", tmp_path / "a.tsv")
    assert code == 2 and "checkpoint" in err
    code, _, err = run(capsys, "score-filter", "--sentences", SENTS, "--pooled", pooled[0],
                       "--scorer", "model", "--checkpoint", tmp_path / "none.ckpt",
                       "--out", tmp_path / "a.tsv")
    assert code == 2 and "none.ckpt" in err


def test_eval_on_gold_is_perfect(tmp_path, capsys):
    pred = tmp_path / "p.tsv"
    with open(GOLD) as fh, open(pred, "w") as out:
        for line in fh:
            sid, a1, rel, a2 = line.rstrip("\n").split("\t")
            out.write(f"{sid}\t1.0\t{a1}\t{rel}\t{a2}\n")
    code, out, _ = run(capsys, "eval", "--pred", pred, "--gold", GOLD,
                       "--curve-csv", tmp_path / "c.csv", "--curve-svg", tmp_path / "c.svg")
    assert code == 0
    assert kv(out) == {"optimal_f1": "1.000000", "auc": "0.000000", "last_f1": "1.000000"}
    assert (tmp_path / "c.svg").read_text().startswith("<svg")
    assert "optimal_f1,auc,last_f1" in (tmp_path / "c.csv").read_text()
    code, out, _ = run(capsys, "pr-curve", "--pred", pred, "--gold", GOLD)
    assert code == 0 and out.startswith("threshold,precision,recall,f1")
    code, out, _ = run(capsys, "redundancy", "--pred", pred)
    assert code == 0 and float(kv(out)["iou"]) >= 0


def test_config_validation(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1.5, "model": {"epochs": 0}, "colour": "red"}))
    code, _, err = run(capsys, "--config", cfg, "redundancy", "--pred", GOLD)
    assert code == 2
    for field in ("seed", "epochs", "colour"):
        assert field in err
    code, _, err = run(capsys, "redundancy", "--pred", GOLD, "--config", tmp_path / "nope.json")
    assert code == 2 and "nope.json" in err


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "--help")[0] == 0


def test_internal_error_exit_code(monkeypatch, capsys):
    import iterex.cli as cli

    def boom(*a, **k):
        raise RuntimeError("bug")

    monkeypatch.setattr(cli, "redundancy_metrics", boom)
    assert run(capsys, "redundancy", "--pred", bundled("toy_clean.tsv"))[0] == 1


def test_end_to_end(pooled, tmp_path, capsys):
    t0 = time.perf_counter()
    path, _ = pooled
    agg, inst, ckpt = tmp_path / "agg.tsv", tmp_path / "inst.tsv", tmp_path / "m.ckpt"
    preds = tmp_path / "preds.tsv"
    assert run(capsys, "score-filter", "--sentences", SENTS, "--pooled", path, "--out", agg)[0] == 0
    code, out, _ = run(capsys, "build-train", "--sentences", SENTS, "--extractions", agg, "--out", inst)
    assert code == 0 and int(kv(out)["instances"]) == int(kv(out)["sentences"]) + len(
        read_extractions(agg))
    code, out, _ = run(capsys, "train", "--instances", inst, "--out", ckpt, "--epochs", 4)
    losses = [float(line.split("\t")[2]) for line in out.splitlines() if line.startswith("epoch")]
    assert code == 0 and len(losses) == 4 and losses[-1] < losses[0]
    code, out, _ = run(capsys, "decode", "--checkpoint", ckpt, "--sentences", SENTS, "--out", preds,
                       "--max-iters", 3, "--jobs", 2)
    assert code == 0 and kv(out)["sentences"] == "50"
    serial = tmp_path / "serial.tsv"
    assert run(capsys, "decode", "--checkpoint", ckpt, "--sentences", SENTS, "--out", serial,
               "--max-iters", 3)[0] == 0
    assert serial.read_bytes() == preds.read_bytes()
    if preds.read_text().strip():
        code, out, _ = run(capsys, "eval", "--pred", preds, "--gold", GOLD)
        assert code == 0 and set(kv(out)) == {"optimal_f1", "auc", "last_f1"}
    code, _, _ = run(capsys, "export-attention", "--checkpoint", ckpt, "--sentences", SENTS,
                     "--sentence-id", "s0002", "--out", tmp_path / "att.csv")
    assert code == 0
    att = (tmp_path / "att.csv").read_text().splitlines()
    assert att[0].split(",")[1:] == ["[CLS]", "john", "bought", "a", "book", "in", "rome", "."]
    code, _, err = run(capsys, "score-filter", "--sentences", SENTS, "--pooled", path,
                       "--scorer", "model", "--checkpoint", ckpt, "--out", tmp_path / "m.tsv")
    assert code == 0
    assert time.perf_counter() - t0 < 600


def test_shuffle_train_order_is_seeded(tmp_path, capsys):
    base = ["build-train", "--sentences", SENTS, "--extractions", bundled("toy_clean.tsv"),
            "--shuffle-train-order"]
    files = []
    for k, seed in enumerate((1, 1, 2)):
        out = tmp_path / f"i{k}.tsv"
        assert run(capsys, *base, "--seed", seed, "--out", out)[0] == 0
        files.append(out.read_text())
    assert files[0] == files[1] != files[2]
