import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SMALL_DIMS, gradient_check, micro_instances
from iterex.neural import ModelConfig, Seq2SeqExtractor, TrainingDiverged, Vocab, covered_attention
from iterex.neural.model import encode_batch, init_params, param_shapes
from iterex.neural.vocab import SPECIALS
from iterex.train_builder import TrainingInstance
from iterex.tuples import CLS, END_OF_EXTRACTIONS, Extraction, Sentence, linearize, memory_tokens


@pytest.fixture(scope="module")
def small():
    inst = micro_instances()
    return Seq2SeqExtractor.from_instances(inst, ModelConfig(**SMALL_DIMS, epochs=3)), inst


def test_vocab_reserved_and_cutoff():
    v = Vocab.build([["a", "a", "b", "[SEP]"], ["c", "a", "c"]], min_freq=2)
    assert v.itos[: len(SPECIALS)] == list(SPECIALS)
    assert v.itos[len(SPECIALS):] == ["a", "c"]
    assert "b" not in v and v.index("b") == v.unk
    assert all(v.stoi[t] == i for i, t in enumerate(v.itos))


def test_gradient_check():
    errs = gradient_check()
    assert set(errs) == set(param_shapes(ModelConfig(), 10))
    bad = {k: e for k, e in errs.items() if not e < 1e-4}
    assert not bad, bad


def test_encode_shape_determinism_and_preconditions(small):
    m, _ = small
    toks = [CLS, "john", "met", "unseenword", "."]
    a, b = m.encode(toks), m.encode(toks)
    assert a.H.shape == (1, len(toks), 2 * m.config.d_hid)
    assert np.array_equal(a.H, b.H)
    assert a.oovs == ["unseenword"]
    with pytest.raises(ValueError, match="CLS"):
        m.encode(["john", "met"])
    with pytest.raises(ValueError, match="cap"):
        m.encode([CLS] + ["x"] * m.config.max_input)


def test_backward_direction_is_reversed_recurrence():
    cfg = ModelConfig(**SMALL_DIMS)
    p = init_params(cfg, 12, np.random.default_rng(3))
    for k in ("W", "U", "b"):  # forward cell borrows the backward weights
        p[f"enc_b_{k}"] += np.random.default_rng(4).uniform(-0.2, 0.2, p[f"enc_b_{k}"].shape)
    src = np.array([[9, 10]])
    mask = np.ones((1, 2))
    H, _ = encode_batch(p, src, mask, cfg)
    q = dict(p)
    for k in ("W", "U", "b"):
        q[f"enc_f_{k}"] = p[f"enc_b_{k}"]
    H_rev, _ = encode_batch(q, src[:, ::-1], mask, cfg)
    h = cfg.d_hid
    np.testing.assert_allclose(H[0, :, h:], H_rev[0, ::-1, :h], rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(["john", "met", "mary", "paris", "zzz", "qqq", "."]),
                min_size=1, max_size=8),
       st.integers(0, 8))
def test_decode_step_is_a_distribution(words, prev):
    inst = micro_instances()
    m = Seq2SeqExtractor.from_instances(inst, ModelConfig(**SMALL_DIMS))
    enc = m.encode([CLS] + words)
    state = m.initial_state(enc)
    for _ in range(3):
        dist, state, alpha, g = m.decode_step(enc, state, prev)
        assert dist.shape == (len(m.vocab) + len(enc.oovs),)
        assert np.all(dist >= 0) and abs(dist.sum() - 1) < 1e-6
        assert np.all(alpha >= 0) and abs(alpha.sum() - 1) < 1e-6 and alpha.shape == (len(words) + 1,)
        assert 0 < g < 1
        # a source-only word gets probability only through copying
        for k, tok in enumerate(enc.oovs):
            pos = [i for i, t in enumerate(enc.tokens) if t == tok]
            assert dist[len(m.vocab) + k] == pytest.approx((1 - g) * alpha[pos].sum(), abs=1e-15)
        prev = int(np.argmax(dist))


def test_training_deterministic_and_decreasing(small):
    _, inst = small
    runs = []
    for _ in range(2):
        m = Seq2SeqExtractor.from_instances(inst, ModelConfig(**SMALL_DIMS, epochs=3))
        r = m.train(inst)
        runs.append((r, m.params))
    (r1, p1), (r2, p2) = runs
    assert r1.losses == r2.losses and r1.initial_loss == r2.initial_loss
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_toy_loss_drops_after_one_epoch():
    from iterex.synthetic import toy_corpus
    from iterex.train_builder import build_corpus

    inst = build_corpus(toy_corpus())
    m = Seq2SeqExtractor.from_instances(inst, ModelConfig())
    r = m.train(inst, epochs=1)
    assert m.loss(inst) < r.initial_loss


def test_single_instance_overfits():
    inst = [TrainingInstance((CLS, "ann", "sang", "a", "song", "."),
                             ("ann", "<rel>", "sang", "<obj>", "a", "song"))]
    m = Seq2SeqExtractor.from_instances(inst, ModelConfig(min_freq=1, batch_size=1))
    m.train(inst, epochs=500, callback=lambda e, loss: loss >= 0.001)
    assert m.loss(inst) < 0.01


def test_non_finite_loss_aborts(small):
    _, inst = small
    m = Seq2SeqExtractor.from_instances(inst, ModelConfig(**SMALL_DIMS))
    m.params["out_b"][:] = np.nan
    with pytest.raises(TrainingDiverged):
        m.train(inst, epochs=1)


def test_train_requires_instances(small):
    with pytest.raises(ValueError):
        small[0].train([])


def test_generation_terminates_at_cap(small):
    m, _ = small
    s = Sentence.from_text("x", "john met mary in paris .")
    res = m.generate_extractions(s, max_iters=3, max_len=5)
    assert len(res.iterations) <= 3
    assert res.stopped_by in {"end", "max_iters"}
    if res.stopped_by == "max_iters":
        assert len(res.iterations) == 3
    assert len(res.extractions) + res.malformed + (res.stopped_by == "end") == len(res.iterations)
    for it in res.iterations:
        assert len(it.emitted) <= 5


def test_malformed_decodes_stay_in_memory(small, monkeypatch):
    m, _ = small
    outputs = iter([(["junk"], [-0.1, -0.1], np.ones((2, 1))),
                    (["a", "<rel>", "b", "<obj>"], [-0.2] * 5, np.ones((5, 1))),
                    ([END_OF_EXTRACTIONS], [-0.1, -0.1], np.ones((2, 1)))])
    seen = []

    def fake(tokens, max_len=None):
        seen.append(list(tokens))
        return next(outputs)

    monkeypatch.setattr(m, "greedy_decode", fake)
    s = Sentence.from_text("x", "a b .")
    res = m.generate_extractions(s)
    assert res.malformed == 1 and res.stopped_by == "end"
    assert res.extractions == [Extraction.from_strings("a", "b")]
    assert res.extractions[0].confidence == pytest.approx(np.exp(-0.2))
    assert seen[1] == memory_tokens(s.tokens, [["junk"]])
    assert seen[2] == memory_tokens(s.tokens, [["junk"], ["a", "<rel>", "b", "<obj>"]])


def test_export_attention(small, tmp_path):
    m, _ = small
    toks = memory_tokens(["john", "met", "mary", "."], [])
    dec = linearize(Extraction.from_strings("john", "met", "mary"))
    mat = m.export_attention(tmp_path / "att.csv", toks, dec)
    assert mat.shape == (len(dec), len(toks))
    np.testing.assert_allclose(mat.sum(axis=1), 1, atol=1e-6)
    rows = list(csv.reader(open(tmp_path / "att.csv")))
    assert rows[0] == ["", *toks]
    assert [r[0] for r in rows[1:]] == dec
    np.testing.assert_allclose(np.array([[float(x) for x in r[1:]] for r in rows[1:]]), mat, atol=1e-8)


def test_checkpoint_round_trip(small, tmp_path):
    m, _ = small
    path = tmp_path / "m.ckpt"
    m.save(path)
    m2 = Seq2SeqExtractor.load(path)
    assert m2.vocab.itos == m.vocab.itos and m2.config == m.config
    assert all(np.array_equal(m.params[k], m2.params[k]) for k in m.params)
    s = Sentence.from_text("x", "bob sold the car .")
    assert m.score_extraction(s, Extraction.from_strings("bob", "sold", "the car")) == \
        m2.score_extraction(s, Extraction.from_strings("bob", "sold", "the car"))
    data = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"nope" + data)
    with pytest.raises(ValueError, match="not a checkpoint"):
        Seq2SeqExtractor.load(tmp_path / "bad")
    (tmp_path / "short").write_bytes(data[:-16])
    with pytest.raises(ValueError, match="truncated"):
        Seq2SeqExtractor.load(tmp_path / "short")


def test_config_rejects_bad_values():
    with pytest.raises(ValueError, match="lr"):
        ModelConfig(lr=0)
    with pytest.raises(ValueError, match="unknown"):
        ModelConfig.from_dict({"d_emb": 8, "bogus": 1})
    assert ModelConfig.from_dict(ModelConfig(d_emb=8).to_dict()) == ModelConfig(d_emb=8)


# ------------------------------------------------------------- toy model


def test_toy_memorized(toy_run):
    exact = sum(set(r.extractions) == set(g) and len(r.extractions) == len(g)
                for r, (_, g) in zip(toy_run.results, toy_run.corpus))
    assert exact / len(toy_run.corpus) >= 0.95
    assert len({len(r.extractions) for r in toy_run.results}) >= 3
    assert all(r.stopped_by in {"end", "max_iters"} for r in toy_run.results)


def test_toy_scores(toy_run):
    m = toy_run.model
    wins = 0
    for sent, gold in toy_run.corpus:
        e = gold[0]
        corrupt = e.with_(arg1=("zebra",) + e.arg1[1:])
        good, bad = m.score_extraction(sent, e), m.score_extraction(sent, corrupt)
        assert 0 < good <= 1 and 0 < bad <= 1
        wins += good > bad
    assert wins == len(toy_run.corpus)


def test_toy_attention_moves_off_covered_words(toy_run):
    pairs = [covered_attention(s, r) for (s, _), r in zip(toy_run.corpus, toy_run.results)]
    pairs = [p for p in pairs if p is not None]
    assert len(pairs) >= 20
    first, second = np.mean(pairs, axis=0)
    assert second < first
